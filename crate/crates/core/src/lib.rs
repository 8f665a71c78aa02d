//! Closed-form Nash equilibria for a two-player stochastic differential game
//! between a resource producer choosing an extraction rate and a government
//! choosing a tax rate, with the resource price following a Markov
//! regime-switching jump-diffusion.
//!
//! The crate has three independent layers that check each other:
//!
//! * [`equilibrium`]: the analytic solver. Linear-feedback extraction and
//!   bang-bang taxation reduce the coupled HJB system to per-regime quadratic
//!   equations in the value coefficients, solved exactly (eigenvalue root
//!   finding plus Newton polish) rather than iteratively.
//! * [`oracle`]: a semi-analytic cross-check that integrates the linear value
//!   propagation ODE with an adaptive Runge-Kutta scheme, with a rigorous
//!   truncation tail bound.
//! * [`sim`]: Monte Carlo simulation of the controlled price process,
//!   including jump sampling and exact regime switching, used to estimate
//!   discounted payoffs and to test Nash deviations empirically.
//!
//! [`model`] holds parameter types and TOML config loading, [`levy`] the jump
//! measure algebra, and [`cli`] the command-line front end.

pub mod cli;
pub mod equilibrium;
pub mod levy;
pub mod model;
pub mod oracle;
pub mod sim;

#[cfg(test)]
pub(crate) mod testkit;

pub use equilibrium::{find_equilibrium, find_equilibrium_at, Equilibrium, EquilibriumError};
pub use model::{Contract, LevyMeasureSpec, MarketModel, RegimeParams, SimConfig};
