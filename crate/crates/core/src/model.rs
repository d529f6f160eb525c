//! Banking books, regulation, and the capital-ratio arithmetic shared by the
//! simulator and the bounds.

use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regulation {
    pub theta_min: f64,
}

/// One bank's balance sheet at time zero (all prices equal to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankBook {
    /// Liquid, zero risk-weight assets.
    pub x: f64,
    /// Units held of each tradable illiquid asset.
    pub s: Vec<f64>,
    /// Nontradable illiquid assets.
    pub ell: f64,
    /// Total liabilities.
    pub p_bar: f64,
    /// Risk-weight of the nontradable assets.
    pub alpha_ell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub alpha: f64,
    pub market_cap: f64,
    pub demand: DemandCurve,
}

impl BankBook {
    /// `p̄ - x - (1 - α_ℓ θ_min) ℓ`: the shortfall the tradable book must cover
    /// at the threshold.
    pub fn liability_gap(&self, reg: &Regulation) -> f64 {
        self.p_bar - self.x - (1.0 - self.alpha_ell * reg.theta_min) * self.ell
    }

    /// `Σ_k (1 - α_k θ_min) s_k`, the threshold-weighted tradable holdings.
    pub fn weighted_holdings(&self, assets: &[AssetSpec], reg: &Regulation) -> f64 {
        self.s
            .iter()
            .zip(assets)
            .map(|(s, a)| (1.0 - a.alpha * reg.theta_min) * s)
            .sum()
    }
}

/// Risk-weighted capital ratio of a bank that has sold fraction `pi` of its
/// tradable book for cumulative proceeds `psi`, at prices `q`.
pub fn capital_ratio(
    book: &BankBook,
    pi: f64,
    q: &[f64],
    psi: f64,
    assets: &[AssetSpec],
) -> Result<f64> {
    let mut tradable = 0.0;
    let mut weighted = 0.0;
    for ((s, q), a) in book.s.iter().zip(q).zip(assets) {
        let v = s * (1.0 - pi) * q;
        tradable += v;
        weighted += a.alpha * v;
    }
    let rwa = weighted + book.alpha_ell * book.ell;
    if rwa <= 0.0 {
        return Err(Error::ZeroRiskWeightedAssets);
    }
    let capital = book.x + psi + tradable + book.ell - book.p_bar;
    Ok(capital.max(0.0) / rwa)
}

/// Uniform price level at which the bank's initial portfolio sits exactly on
/// the regulatory threshold. Values `<= 0` mean it never has to sell.
pub fn threshold_price(book: &BankBook, assets: &[AssetSpec], reg: &Regulation) -> Result<f64> {
    let denom = book.weighted_holdings(assets, reg);
    if denom <= 0.0 {
        return Err(Error::NoTradableAssets);
    }
    Ok(book.liability_gap(reg) / denom)
}

/// `Σ_k (1 - α_k θ_min) s_k q_k - gap`; an inactive bank hits the threshold
/// when this reaches zero. Linear in the prices, so it is nonincreasing
/// whenever prices fall.
pub fn activation_margin(book: &BankBook, assets: &[AssetSpec], reg: &Regulation, q: &[f64]) -> f64 {
    let held: f64 = book
        .s
        .iter()
        .zip(assets)
        .zip(q)
        .map(|((s, a), q)| (1.0 - a.alpha * reg.theta_min) * s * q)
        .sum();
    held - book.liability_gap(reg)
}

/// Bank indices sorted by decreasing threshold price, ties by index. Banks
/// without tradable assets sort last.
pub fn canonical_order(banks: &[BankBook], assets: &[AssetSpec], reg: &Regulation) -> Vec<usize> {
    let key: Vec<f64> = banks
        .iter()
        .map(|b| threshold_price(b, assets, reg).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut order: Vec<usize> = (0..banks.len()).collect();
    order.sort_by(|&i, &j| key[j].total_cmp(&key[i]).then(i.cmp(&j)));
    order
}

/// Snapshot of the system at one instant. Vectors are in input bank order.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    /// Fraction of its tradable book each bank has sold.
    pub pi: Vec<f64>,
    /// Units sold, `gamma[i][k] = s_ik · pi_i`.
    pub gamma: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// Cumulative liquidation proceeds per bank.
    pub psi: Vec<f64>,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<SystemState>,
    /// Regulatory hitting time per bank, `None` if it never activates.
    pub hitting_times: Vec<Option<f64>>,
    pub terminal: SystemState,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{ImpactCurve, TimeDecay};

    fn asset(alpha: f64) -> AssetSpec {
        AssetSpec {
            alpha,
            market_cap: 40.0,
            demand: DemandCurve::new(TimeDecay::Constant, ImpactCurve::None),
        }
    }

    fn book(x: f64, s: Vec<f64>, ell: f64, p_bar: f64, alpha_ell: f64) -> BankBook {
        BankBook { x, s, ell, p_bar, alpha_ell }
    }

    const REG: Regulation = Regulation { theta_min: 0.1 };

    #[test]
    fn capital_ratio_examples() {
        let assets = [asset(5.0)];
        let b = book(0.0, vec![2.0], 0.0, 1.0, 0.0);
        assert!((capital_ratio(&b, 0.0, &[1.0], 0.0, &assets).unwrap() - 0.1).abs() < 1e-15);

        let b = book(0.5, vec![2.0], 1.0, 2.0, 0.5);
        let theta = capital_ratio(&b, 0.0, &[0.9], 0.0, &assets).unwrap();
        assert!((theta - 1.3 / 9.5).abs() < 1e-15);
        assert!((theta - 0.1368).abs() < 1e-4);

        let assets2 = [asset(5.0), asset(2.0)];
        let b = book(0.3, vec![1.0, 2.0], 0.5, 0.0, 0.4);
        let theta = capital_ratio(&b, 0.0, &[1.0, 1.0], 0.0, &assets2).unwrap();
        assert!((theta - (0.3 + 3.0 + 0.5) / (5.0 + 4.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn capital_ratio_rejects_empty_risk() {
        let b = book(1.0, vec![0.0], 0.0, 0.5, 0.0);
        assert!(matches!(
            capital_ratio(&b, 0.0, &[1.0], 0.0, &[asset(5.0)]),
            Err(Error::ZeroRiskWeightedAssets)
        ));
    }

    #[test]
    fn threshold_price_examples() {
        let assets = [asset(5.0)];
        for i in 1..=20 {
            let x = 2.0 * (i as f64 - 1.0) / 475.0;
            let b = book(x, vec![2.0], 0.0, 1.0, 0.0);
            let q = threshold_price(&b, &assets, &REG).unwrap();
            assert!((q - (1.0 - x)).abs() < 1e-15);
        }
        let b2 = book(2.0 / 475.0, vec![2.0], 0.0, 1.0, 0.0);
        assert!((threshold_price(&b2, &assets, &REG).unwrap() - 0.995_789_47).abs() < 1e-8);

        let rich = book(1.0, vec![2.0], 0.0, 0.9, 0.0);
        assert!(threshold_price(&rich, &assets, &REG).unwrap() <= 0.0);

        let two = [asset(5.0), asset(5.0)];
        let b = book(0.0, vec![2.0, 0.0], 0.0, 0.98, 0.0);
        assert!((threshold_price(&b, &two, &REG).unwrap() - 0.98).abs() < 1e-15);

        let empty = book(0.0, vec![0.0], 1.0, 0.5, 0.2);
        assert!(matches!(threshold_price(&empty, &assets, &REG), Err(Error::NoTradableAssets)));
    }

    #[test]
    fn activation_margin_examples() {
        let assets = [asset(5.0)];
        let b = book(2.0 / 475.0, vec![2.0], 0.0, 1.0, 0.0);
        let qbar = threshold_price(&b, &assets, &REG).unwrap();
        assert!(activation_margin(&b, &assets, &REG, &[qbar]).abs() < 1e-15);
        assert!((activation_margin(&b, &assets, &REG, &[1.0]) - 0.004_210_526_3).abs() < 1e-9);

        let two = [asset(5.0), asset(5.0)];
        let b = book(0.0, vec![1.0, 1.0], 0.0, 0.98, 0.0);
        assert!((activation_margin(&b, &two, &REG, &[1.0, 1.0]) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn threshold_price_scale_invariant() {
        let assets = [asset(5.0)];
        let b = book(0.2, vec![2.0], 0.7, 1.5, 0.3);
        let q0 = threshold_price(&b, &assets, &REG).unwrap();
        for c in [0.1, 3.0, 1e4] {
            let scaled = book(0.2 * c, vec![2.0 * c], 0.7 * c, 1.5 * c, 0.3);
            let q = threshold_price(&scaled, &assets, &REG).unwrap();
            assert!((q - q0).abs() < 1e-13 * q0.abs().max(1.0));
        }
    }

    #[test]
    fn canonical_order_sorts_by_threshold() {
        let assets = [asset(5.0)];
        let banks = vec![
            book(0.1, vec![2.0], 0.0, 1.0, 0.0),
            book(0.0, vec![2.0], 0.0, 1.0, 0.0),
            book(0.1, vec![2.0], 0.0, 1.0, 0.0),
            book(0.0, vec![0.0], 1.0, 0.1, 1.0),
        ];
        assert_eq!(canonical_order(&banks, &assets, &REG), vec![1, 0, 2, 3]);
    }
}
