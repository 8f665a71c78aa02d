//! Model fixtures shared across in-crate unit tests.

use crate::model::{Contract, LevyMeasureSpec, MarketModel, RegimeParams};

/// Two-regime precious-metal market: exponential jumps, no price impact,
/// royalty-style contract. Matches `configs/medium_producer.toml`.
pub(crate) fn gold_market() -> (MarketModel, Contract) {
    (
        MarketModel {
            regimes: vec![
                RegimeParams { mu: 0.08, sigma: 0.2, gamma: 0.05 },
                RegimeParams { mu: -0.1, sigma: 0.3, gamma: 0.09 },
            ],
            q: vec![vec![-0.4, 0.4], vec![0.1, -0.1]],
            levy: LevyMeasureSpec::Exponential { eta: 5.0 },
        },
        Contract {
            theta: 0.3,
            a: 15.0,
            rho: 0.0,
            r: 0.02,
            u2_min: 0.0,
            u2_max: 0.2,
            u1_max: f64::INFINITY,
        },
    )
}

/// Two-regime crude-oil market: heavy-tailed symmetric jumps and a small
/// linear price impact. Matches `configs/major_producer.toml`.
pub(crate) fn oil_market() -> (MarketModel, Contract) {
    (
        MarketModel {
            regimes: vec![
                RegimeParams { mu: 0.02, sigma: 0.2, gamma: 0.022 },
                RegimeParams { mu: -0.1, sigma: 0.3, gamma: 0.03 },
            ],
            q: vec![vec![-0.3, 0.3], vec![0.5, -0.5]],
            levy: LevyMeasureSpec::HeavySymmetric,
        },
        Contract {
            theta: 0.2,
            a: 2.0,
            rho: 0.001,
            r: 0.02,
            u2_min: 0.0,
            u2_max: 0.2,
            u1_max: f64::INFINITY,
        },
    )
}
