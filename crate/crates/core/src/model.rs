//! Market, contract and simulation data model plus TOML configuration loading.
//!
//! The commodity price follows a regime-switching jump-diffusion
//!
//! ```text
//! dX(t) = [X(t) mu(alpha) - rho u1(t)] dt + sigma(alpha) X(t) dW(t)
//!         + X(t-) integral gamma(alpha) z Nbar(dt, dz)
//! ```
//!
//! where `alpha` is a continuous-time Markov chain with generator `q` and
//! `Nbar` compensates jumps with `|z| < 1` only. The producer extracts at rate
//! `u1` (price impact `rho`), the government takes a share `theta` of profit
//! and taxes the producer's share at rate `u2` within `[u2_min, u2_max]`.
//!
//! Configuration files carry three sections, `[model]`, `[contract]` and
//! `[sim]`; unknown keys are rejected. Regime indices are one-based in files
//! and reports.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Per-regime price dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    /// Drift rate per year.
    pub mu: f64,
    /// Diffusion volatility per sqrt-year, nonnegative.
    pub sigma: f64,
    /// Jump amplitude multiplier, nonnegative.
    pub gamma: f64,
}

/// Jump-size measure of the driving Levy process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyRaw", into = "LevyRaw")]
pub enum LevyMeasureSpec {
    /// No jumps.
    None,
    /// Finite activity, density `eta exp(-eta z)` on `z > 0` (unit total mass).
    Exponential { eta: f64 },
    /// Infinite activity, symmetric density `exp(-|z|) / z^2` on `z != 0`.
    HeavySymmetric,
}

/// Serde face of [`LevyMeasureSpec`]: a `kind` tag plus optional parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyRaw {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
}

impl TryFrom<LevyRaw> for LevyMeasureSpec {
    type Error = String;

    fn try_from(raw: LevyRaw) -> Result<Self, String> {
        match (raw.kind.as_str(), raw.eta) {
            ("none", None) => Ok(LevyMeasureSpec::None),
            ("exponential", Some(eta)) => Ok(LevyMeasureSpec::Exponential { eta }),
            ("exponential", None) => Err("model.levy: kind \"exponential\" requires eta".into()),
            ("heavy_symmetric", None) => Ok(LevyMeasureSpec::HeavySymmetric),
            (k @ ("none" | "heavy_symmetric"), Some(_)) => {
                Err(format!("model.levy: eta is not a parameter of kind \"{k}\""))
            }
            (other, _) => Err(format!(
                "model.levy: unknown kind \"{other}\" (expected none, exponential or heavy_symmetric)"
            )),
        }
    }
}

impl From<LevyMeasureSpec> for LevyRaw {
    fn from(spec: LevyMeasureSpec) -> LevyRaw {
        match spec {
            LevyMeasureSpec::None => LevyRaw { kind: "none".into(), eta: None },
            LevyMeasureSpec::Exponential { eta } => {
                LevyRaw { kind: "exponential".into(), eta: Some(eta) }
            }
            LevyMeasureSpec::HeavySymmetric => {
                LevyRaw { kind: "heavy_symmetric".into(), eta: None }
            }
        }
    }
}

/// Price dynamics: regimes, chain generator and jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketModel {
    pub regimes: Vec<RegimeParams>,
    /// m x m chain generator; off-diagonals nonnegative, rows sum to zero.
    pub q: Vec<Vec<f64>>,
    pub levy: LevyMeasureSpec,
}

impl MarketModel {
    /// Number of regimes.
    pub fn m(&self) -> usize {
        self.regimes.len()
    }

    /// Sum of off-diagonal rates out of regime `i` (equals `-q[i][i]` for a
    /// valid generator).
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.q[i]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v)
            .sum()
    }
}

fn default_u1_max() -> f64 {
    f64::INFINITY
}

/// Contract and preference parameters shared by both players.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    /// Government profit share, in (0, 1).
    pub theta: f64,
    /// Quadratic extraction cost coefficient, positive.
    pub a: f64,
    /// Price impact of extraction, in [0, 1).
    pub rho: f64,
    /// Discount rate, positive.
    pub r: f64,
    /// Lower tax bound, in (-1, 0].
    pub u2_min: f64,
    /// Upper tax bound, in (u2_min, 1) and nonnegative.
    pub u2_max: f64,
    /// Extraction-rate cap; `inf` (the default) means uncapped.
    #[serde(default = "default_u1_max")]
    pub u1_max: f64,
}

fn default_trunc_eps() -> f64 {
    1e-3
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Initial price, nonnegative.
    pub x0: f64,
    /// Initial regime, one-based as in configuration files. Use
    /// [`SimConfig::i0_index`] for the zero-based index.
    pub i0: usize,
    /// Time horizon in years.
    pub horizon: f64,
    /// Euler step, `0 < dt <= horizon`.
    pub dt: f64,
    /// Number of simulated paths.
    pub n_paths: usize,
    /// Base RNG seed; each path derives independent streams from it.
    pub seed: u64,
    /// Small-jump truncation threshold for infinite-activity measures, in (0, 1).
    #[serde(default = "default_trunc_eps")]
    pub trunc_eps: f64,
}

impl SimConfig {
    /// Zero-based initial regime index.
    pub fn i0_index(&self) -> usize {
        self.i0 - 1
    }
}

/// Whole configuration document as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub model: MarketModel,
    pub contract: Contract,
    pub sim: SimConfig,
}

/// One violated constraint, with the configuration field it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Collected validation failures; empty means the configuration is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue { field: field.into(), message: message.into() });
    }

    fn merge(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{0}")]
    Invalid(ValidationReport),
}

fn check_finite(report: &mut ValidationReport, field: &str, value: f64) -> bool {
    if value.is_finite() {
        true
    } else {
        report.push(field, "must be finite");
        false
    }
}

/// Structural validation of market and contract parameters. Returns every
/// violation found rather than stopping at the first.
pub fn validate_model(model: &MarketModel, contract: &Contract) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let m = model.m();

    if m == 0 {
        rep.push("model.regimes", "at least one regime is required");
    }
    for (i, reg) in model.regimes.iter().enumerate() {
        let idx = i + 1;
        check_finite(&mut rep, &format!("model.regimes[{idx}].mu"), reg.mu);
        if check_finite(&mut rep, &format!("model.regimes[{idx}].sigma"), reg.sigma)
            && reg.sigma < 0.0
        {
            rep.push(format!("model.regimes[{idx}].sigma"), "must be nonnegative");
        }
        if check_finite(&mut rep, &format!("model.regimes[{idx}].gamma"), reg.gamma)
            && reg.gamma < 0.0
        {
            rep.push(format!("model.regimes[{idx}].gamma"), "must be nonnegative");
        }
    }

    if model.q.len() != m || model.q.iter().any(|row| row.len() != m) {
        rep.push("model.q", format!("must be a {m}x{m} matrix matching the regime count"));
    } else {
        for i in 0..m {
            let mut scale: f64 = 1.0;
            for j in 0..m {
                let v = model.q[i][j];
                if !check_finite(&mut rep, &format!("model.q[{}][{}]", i + 1, j + 1), v) {
                    continue;
                }
                scale = scale.max(v.abs());
                if i != j && v < 0.0 {
                    rep.push(
                        format!("model.q[{}][{}]", i + 1, j + 1),
                        "off-diagonal rates must be nonnegative",
                    );
                }
            }
            let row_sum: f64 = model.q[i].iter().sum();
            if row_sum.abs() > 1e-12 * scale {
                rep.push(
                    format!("model.q[{}]", i + 1),
                    format!("row must sum to zero (got {row_sum:e})"),
                );
            }
        }
    }

    if let LevyMeasureSpec::Exponential { eta } = model.levy {
        if check_finite(&mut rep, "model.levy.eta", eta) && eta <= 0.0 {
            rep.push("model.levy.eta", "must be positive");
        }
    }

    if check_finite(&mut rep, "contract.theta", contract.theta)
        && !(contract.theta > 0.0 && contract.theta < 1.0)
    {
        rep.push("contract.theta", "must lie in (0, 1)");
    }
    if check_finite(&mut rep, "contract.a", contract.a) && contract.a <= 0.0 {
        rep.push("contract.a", "must be positive");
    }
    if check_finite(&mut rep, "contract.rho", contract.rho)
        && !(contract.rho >= 0.0 && contract.rho < 1.0)
    {
        rep.push("contract.rho", "must lie in [0, 1)");
    }
    if check_finite(&mut rep, "contract.r", contract.r) && contract.r <= 0.0 {
        rep.push("contract.r", "must be positive");
    }
    let min_ok = check_finite(&mut rep, "contract.u2_min", contract.u2_min);
    let max_ok = check_finite(&mut rep, "contract.u2_max", contract.u2_max);
    if min_ok && !(contract.u2_min > -1.0 && contract.u2_min <= 0.0) {
        rep.push("contract.u2_min", "must lie in (-1, 0]");
    }
    if max_ok && !(contract.u2_max >= 0.0 && contract.u2_max < 1.0) {
        rep.push("contract.u2_max", "must lie in [0, 1)");
    }
    if min_ok && max_ok && contract.u2_min >= contract.u2_max {
        rep.push("contract.u2_max", "must be strictly greater than u2_min");
    }
    if contract.u1_max.is_nan() || contract.u1_max <= 0.0 {
        rep.push("contract.u1_max", "must be positive (inf allowed)");
    }

    rep
}

/// Validation of simulation parameters against the model they will run on.
pub fn validate_sim(sim: &SimConfig, model: &MarketModel) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if check_finite(&mut rep, "sim.x0", sim.x0) && sim.x0 < 0.0 {
        rep.push("sim.x0", "must be nonnegative");
    }
    if sim.i0 == 0 || sim.i0 > model.m() {
        rep.push("sim.i0", format!("one-based regime index must lie in 1..={}", model.m()));
    }
    let horizon_ok = check_finite(&mut rep, "sim.horizon", sim.horizon);
    if horizon_ok && sim.horizon <= 0.0 {
        rep.push("sim.horizon", "must be positive");
    }
    if check_finite(&mut rep, "sim.dt", sim.dt) && (sim.dt <= 0.0 || sim.dt > sim.horizon) {
        rep.push("sim.dt", "must satisfy 0 < dt <= horizon");
    }
    if sim.n_paths == 0 {
        rep.push("sim.n_paths", "must be at least 1");
    }
    if check_finite(&mut rep, "sim.trunc_eps", sim.trunc_eps)
        && !(sim.trunc_eps > 0.0 && sim.trunc_eps < 1.0)
    {
        rep.push("sim.trunc_eps", "must lie in (0, 1)");
    }
    rep
}

/// Parse and validate a configuration document from TOML text.
pub fn parse_config(text: &str) -> Result<(MarketModel, Contract, SimConfig), ConfigError> {
    let doc: ConfigDoc = toml::from_str(text)?;
    let mut rep = validate_model(&doc.model, &doc.contract);
    rep.merge(validate_sim(&doc.sim, &doc.model));
    if !rep.is_valid() {
        return Err(ConfigError::Invalid(rep));
    }
    Ok((doc.model, doc.contract, doc.sim))
}

/// Load and validate a configuration file.
pub fn load_config(path: &Path) -> Result<(MarketModel, Contract, SimConfig), ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Serialize a configuration back to TOML. Numeric fields round-trip
/// bit-exactly through [`parse_config`].
pub fn to_config_string(model: &MarketModel, contract: &Contract, sim: &SimConfig) -> String {
    let doc = ConfigDoc { model: model.clone(), contract: *contract, sim: *sim };
    toml::to_string_pretty(&doc).expect("configuration serializes")
}
