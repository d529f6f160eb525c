//! Preset scenarios from the worked examples.

use crate::demand::{DemandCurve, ImpactCurve, TimeDecay};
use crate::model::{AssetSpec, BankBook, Regulation};
use crate::scenario::Scenario;

/// Decay rate under which the unimpacted price ends the crisis at 0.95.
pub fn base_decay_rate() -> f64 {
    -(0.95f64).ln()
}

/// Impact parameter of the leverage study, `-ln 0.9 / (1 - 1/ln 0.9)`.
pub fn leverage_impact() -> f64 {
    let l = (0.9f64).ln();
    -l / (1.0 - 1.0 / l)
}

/// Largest leverage for which [`leverage`] stays admissible.
pub fn leverage_limit() -> f64 {
    1.0 - 1.0 / (0.9f64).ln()
}

fn crisis_curve(rate: f64, b: f64) -> DemandCurve {
    DemandCurve::new(TimeDecay::exponential(rate, 1.0), ImpactCurve::Exponential { b })
}

/// Twenty banks with one unit of liabilities, two units of the asset and
/// liquid buffers `2(i-1)/475`, under exponential impact `b`.
pub fn twenty_bank(b: f64) -> Scenario {
    twenty_bank_with_rate(base_decay_rate(), b)
}

pub fn twenty_bank_with_rate(rate: f64, b: f64) -> Scenario {
    let banks = (0..20)
        .map(|i| BankBook { x: 2.0 * i as f64 / 475.0, s: vec![2.0], ell: 0.0, p_bar: 1.0, alpha_ell: 0.0 })
        .collect();
    Scenario {
        regulation: Regulation { theta_min: 0.1 },
        banks,
        assets: vec![AssetSpec { alpha: 5.0, market_cap: 40.0, demand: crisis_curve(rate, b) }],
        horizon: 1.0,
    }
}

/// Impact used by the randomized stress test.
pub const PROBABILITY_IMPACT: f64 = 0.9 / 40.0;

/// Exponential rate `μ` of the random decay parameter, chosen so that the
/// unimpacted price ends below 0.95 with probability 0.05.
pub fn probability_rate() -> f64 {
    let (l20, l19) = (20f64.ln(), 19f64.ln());
    l20 / (l20 - l19)
}

/// A single bank starting exactly at leverage `lambda_max` with one unit of
/// capital.
pub fn leverage(lambda_max: f64) -> Scenario {
    Scenario {
        regulation: Regulation { theta_min: 1.0 / lambda_max },
        banks: vec![BankBook { x: 0.0, s: vec![lambda_max], ell: 0.0, p_bar: lambda_max - 1.0, alpha_ell: 1.0 }],
        assets: vec![AssetSpec {
            alpha: 1.0,
            market_cap: lambda_max,
            demand: crisis_curve(base_decay_rate(), leverage_impact()),
        }],
        horizon: 1.0,
    }
}

/// Two banks and two assets; `zeta` moves the portfolios from fully
/// specialised (0) to identical (1). Only the first asset is stressed.
pub fn two_asset(zeta: f64) -> Scenario {
    let book = |s: Vec<f64>| BankBook { x: 0.0, s, ell: 0.0, p_bar: 0.98, alpha_ell: 0.0 };
    Scenario {
        regulation: Regulation { theta_min: 0.1 },
        banks: vec![book(vec![2.0 - zeta, zeta]), book(vec![zeta, 2.0 - zeta])],
        assets: vec![
            AssetSpec { alpha: 5.0, market_cap: 2.0, demand: crisis_curve(base_decay_rate(), 0.495) },
            AssetSpec { alpha: 5.0, market_cap: 2.0, demand: crisis_curve(0.0, 0.495) },
        ],
        horizon: 1.0,
    }
}
