//! Inverse demand curves `F(t, Γ) = f_t(t) · f_Γ(Γ)`.
//!
//! The time factor carries the exogenous stress, the impact factor the
//! permanent price impact of liquidating `Γ` units. Both are normalized to
//! one at the origin and nonincreasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Regulation;

/// Tolerance for the numerical monotonicity check on tabulated curves.
pub const MONOTONICITY_TOL: f64 = 1e-10;
/// Default number of grid points for the numerical monotonicity check.
pub const MONOTONICITY_GRID: usize = 10_000;

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes.
///
/// Preserves monotonicity of the data and is C¹. Outside the tabulated
/// range the curve is held constant at the nearest endpoint value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "a tabulated curve needs at least two points".into(),
            ));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tabulated curve has non-finite values".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "tabulated abscissae must be strictly increasing".into(),
            ));
        }
        let slopes = pchip_slopes(&xs, &ys);
        Ok(Self { xs, ys, slopes })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn first(&self) -> (f64, f64) {
        (self.xs[0], self.ys[0])
    }

    pub fn last(&self) -> (f64, f64) {
        let n = self.xs.len() - 1;
        (self.xs[n], self.ys[n])
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if x < self.xs[0] || x >= self.xs[n - 1] {
            return None;
        }
        // partition_point gives the first node strictly greater than x
        Some(self.xs.partition_point(|&v| v <= x) - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.segment(x) {
            None if x < self.xs[0] => self.ys[0],
            None => self.ys[self.ys.len() - 1],
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let s = (x - self.xs[i]) / h;
                let (h00, h10, h01, h11) = (
                    (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
                    s * (1.0 - s) * (1.0 - s),
                    s * s * (3.0 - 2.0 * s),
                    s * s * (s - 1.0),
                );
                h00 * self.ys[i]
                    + h10 * h * self.slopes[i]
                    + h01 * self.ys[i + 1]
                    + h11 * h * self.slopes[i + 1]
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => 0.0,
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let s = (x - self.xs[i]) / h;
                let dh00 = 6.0 * s * s - 6.0 * s;
                let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
                let dh01 = -dh00;
                let dh11 = 3.0 * s * s - 2.0 * s;
                (dh00 * self.ys[i] + dh01 * self.ys[i + 1]) / h
                    + dh10 * self.slopes[i]
                    + dh11 * self.slopes[i + 1]
            }
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for MonotoneCubic {
    type Error = Error;

    fn try_from(points: Vec<[f64; 2]>) -> Result<Self> {
        let pts: Vec<(f64, f64)> = points.into_iter().map(|p| (p[0], p[1])).collect();
        Self::new(&pts)
    }
}

impl From<MonotoneCubic> for Vec<[f64; 2]> {
    fn from(c: MonotoneCubic) -> Self {
        c.points().map(|(x, y)| [x, y]).collect()
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = pchip_endpoint(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_endpoint(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Exogenous price response in time, `f_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeDecay {
    Constant,
    /// `exp(-rate · min(t, freeze_at))`; no freeze when `freeze_at` is absent.
    Exponential {
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        freeze_at: Option<f64>,
    },
    Tabulated { table: MonotoneCubic },
}

impl TimeDecay {
    pub fn exponential(rate: f64, freeze_at: f64) -> Self {
        TimeDecay::Exponential { rate, freeze_at: Some(freeze_at) }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeDecay::Constant => 1.0,
            TimeDecay::Exponential { rate, freeze_at } => {
                let te = freeze_at.map_or(t, |f| t.min(f));
                (-rate * te).exp()
            }
            TimeDecay::Tabulated { table } => table.value(t),
        }
    }

    /// Derivative in time. The exponential family uses the left derivative
    /// at the freeze time and is flat afterwards.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeDecay::Constant => 0.0,
            TimeDecay::Exponential { rate, freeze_at } => match freeze_at {
                Some(f) if t > *f => 0.0,
                _ => -rate * (-rate * t).exp(),
            },
            TimeDecay::Tabulated { table } => table.derivative(t),
        }
    }

    /// Earliest `t ∈ [0, horizon]` with `f_t(t) ≤ level`, if any.
    pub fn first_time_at_or_below(&self, level: f64, horizon: f64) -> Option<f64> {
        if self.value(0.0) <= level {
            return Some(0.0);
        }
        if self.value(horizon) > level {
            return None;
        }
        match self {
            TimeDecay::Exponential { rate, .. } if *rate > 0.0 => {
                let t = -level.ln() / rate;
                Some(t.clamp(0.0, horizon))
            }
            _ => {
                let (mut lo, mut hi) = (0.0, horizon);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.value(mid) <= level {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-15 * horizon.max(1.0) {
                        break;
                    }
                }
                Some(hi)
            }
        }
    }
}

/// Endogenous price impact of liquidations, `f_Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpactCurve {
    None,
    /// `1 - bΓ`, defined for `Γ < 1/b`.
    Linear { b: f64 },
    /// `exp(-bΓ)`.
    Exponential { b: f64 },
    Tabulated { table: MonotoneCubic },
}

impl ImpactCurve {
    pub fn value(&self, gamma: f64) -> Result<f64> {
        match self {
            ImpactCurve::None => Ok(1.0),
            ImpactCurve::Linear { b } => {
                let v = 1.0 - b * gamma;
                if v <= 0.0 {
                    Err(Error::DomainExceeded { gamma, limit: 1.0 / b })
                } else {
                    Ok(v)
                }
            }
            ImpactCurve::Exponential { b } => Ok((-b * gamma).exp()),
            ImpactCurve::Tabulated { table } => Ok(table.value(gamma)),
        }
    }

    pub fn derivative(&self, gamma: f64) -> Result<f64> {
        match self {
            ImpactCurve::None => Ok(0.0),
            ImpactCurve::Linear { b } => {
                if b * gamma >= 1.0 {
                    Err(Error::DomainExceeded { gamma, limit: 1.0 / b })
                } else {
                    Ok(-b)
                }
            }
            ImpactCurve::Exponential { b } => Ok(-b * (-b * gamma).exp()),
            ImpactCurve::Tabulated { table } => Ok(table.derivative(gamma)),
        }
    }

    /// `f_Γ'(Γ) / f_Γ(Γ)`.
    pub fn log_derivative(&self, gamma: f64) -> Result<f64> {
        match self {
            ImpactCurve::None => Ok(0.0),
            ImpactCurve::Exponential { b } => Ok(-b),
            _ => Ok(self.derivative(gamma)? / self.value(gamma)?),
        }
    }

    /// Exponential decay constant, when the curve is of the `exp(-bΓ)` family
    /// (no impact counts as `b = 0`).
    pub fn exponential_rate(&self) -> Option<f64> {
        match self {
            ImpactCurve::None => Some(0.0),
            ImpactCurve::Exponential { b } => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    pub time: TimeDecay,
    pub impact: ImpactCurve,
}

impl DemandCurve {
    pub fn new(time: TimeDecay, impact: ImpactCurve) -> Self {
        Self { time, impact }
    }

    pub fn eval_ft(&self, t: f64) -> f64 {
        self.time.value(t)
    }

    pub fn eval_ft_prime(&self, t: f64) -> f64 {
        self.time.derivative(t)
    }

    pub fn eval_fgamma(&self, gamma: f64) -> Result<f64> {
        self.impact.value(gamma)
    }

    pub fn eval_fgamma_prime(&self, gamma: f64) -> Result<f64> {
        self.impact.derivative(gamma)
    }

    pub fn price(&self, t: f64, gamma: f64) -> Result<f64> {
        Ok(self.eval_ft(t) * self.eval_fgamma(gamma)?)
    }
}

/// Open interval of risk-weights for which liquidations stay well posed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaInterval {
    pub lower: f64,
    pub upper: f64,
}

impl AlphaInterval {
    pub fn contains(&self, alpha: f64) -> bool {
        alpha > self.lower && alpha < self.upper
    }
}

/// Admissible risk-weights for an asset with market cap `market_cap`:
/// `(-M f'(0) / ((1 - M f'(0)) θ_min), 1/θ_min)`.
pub fn admissible_alpha_interval(
    impact: &ImpactCurve,
    market_cap: f64,
    reg: &Regulation,
) -> Result<AlphaInterval> {
    if market_cap <= 0.0 {
        return Err(Error::InvalidArgument("market cap must be positive".into()));
    }
    let slope = impact.derivative(0.0)?;
    let mf = market_cap * slope;
    Ok(AlphaInterval {
        lower: -mf / ((1.0 - mf) * reg.theta_min),
        upper: 1.0 / reg.theta_min,
    })
}

/// Largest exponential impact parameter compatible with risk-weight `alpha`,
/// i.e. `αθ / ((1 - αθ) M)`.
pub fn max_exponential_impact(alpha: f64, market_cap: f64, reg: &Regulation) -> f64 {
    let at = alpha * reg.theta_min;
    at / ((1.0 - at) * market_cap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCheck {
    pub satisfied: bool,
    /// Liquidation level at which `(M - Γ) f'(Γ)/f(Γ)` first decreases.
    pub violation_at: Option<f64>,
}

/// Checks that `Γ ↦ (M - Γ) f_Γ'(Γ) / f_Γ(Γ)` is nondecreasing on `[0, M)`.
///
/// Closed-form families are decided analytically; tabulated curves are
/// scanned on a uniform grid of `grid_points` nodes.
pub fn check_monotonicity_condition(
    impact: &ImpactCurve,
    market_cap: f64,
    grid_points: usize,
) -> MonotonicityCheck {
    let pass = MonotonicityCheck { satisfied: true, violation_at: None };
    match impact {
        ImpactCurve::None | ImpactCurve::Exponential { .. } => pass,
        // derivative of the ratio is b(1 - bM)/(1 - bΓ)^2
        ImpactCurve::Linear { b } => {
            if b * market_cap < 1.0 {
                pass
            } else {
                MonotonicityCheck { satisfied: false, violation_at: Some(0.0) }
            }
        }
        ImpactCurve::Tabulated { .. } => {
            let ratio = |g: f64| -> Option<f64> {
                let v = impact.value(g).ok()?;
                let d = impact.derivative(g).ok()?;
                Some((market_cap - g) * d / v)
            };
            let n = grid_points.max(2);
            let step = market_cap / n as f64;
            let mut prev = match ratio(0.0) {
                Some(r) => r,
                None => return MonotonicityCheck { satisfied: false, violation_at: Some(0.0) },
            };
            if prev > MONOTONICITY_TOL {
                return MonotonicityCheck { satisfied: false, violation_at: Some(0.0) };
            }
            for j in 1..n {
                let g = j as f64 * step;
                let Some(r) = ratio(g) else {
                    return MonotonicityCheck { satisfied: false, violation_at: Some(g) };
                };
                if r < prev - MONOTONICITY_TOL || r > MONOTONICITY_TOL {
                    return MonotonicityCheck { satisfied: false, violation_at: Some(g) };
                }
                prev = r;
            }
            pass
        }
    }
}

/// Converts a nondecreasing schedule of outside liquidations `η(t)` into the
/// equivalent time factor `f_t(t) = exp(-b η(t))`.
pub fn exogenous_to_ft(eta: &[(f64, f64)], impact: &ImpactCurve) -> Result<TimeDecay> {
    let b = match impact {
        ImpactCurve::Exponential { b } if *b > 0.0 => *b,
        _ => return Err(Error::NotExponentialImpact),
    };
    match eta.first() {
        Some(&(t0, e0)) if t0 == 0.0 && e0 == 0.0 => {}
        _ => {
            return Err(Error::InvalidArgument(
                "exogenous schedule must start at (0, 0)".into(),
            ))
        }
    }
    if eta.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(Error::InvalidArgument("exogenous schedule must be nondecreasing".into()));
    }
    let points: Vec<(f64, f64)> = eta.iter().map(|&(t, e)| (t, (-b * e).exp())).collect();
    Ok(TimeDecay::Tabulated { table: MonotoneCubic::new(&points)? })
}

/// Inverse of [`exogenous_to_ft`]: `η(t) = -log(f_t(t)) / b`.
pub fn ft_to_exogenous(time: &TimeDecay, impact: &ImpactCurve, t: f64) -> Result<f64> {
    match impact {
        ImpactCurve::Exponential { b } if *b > 0.0 => Ok(-time.value(t).ln() / b),
        _ => Err(Error::NotExponentialImpact),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg(theta: f64) -> Regulation {
        Regulation { theta_min: theta }
    }

    #[test]
    fn exponential_time_decay_values() {
        let a = -(0.95f64).ln();
        let ft = TimeDecay::exponential(a, 1.0);
        assert!((ft.value(1.0) - 0.95).abs() < 1e-15);
        assert_eq!(ft.value(0.0), 1.0);
        assert!((ft.value(0.5) - 0.974_679_434_480_896_4).abs() < 1e-12);
        assert_eq!(ft.derivative(1.5), 0.0);
        assert!((ft.value(3.0) - 0.95).abs() < 1e-15);
        assert!(ft.derivative(1.0) < 0.0);
    }

    #[test]
    fn impact_values() {
        let exp = ImpactCurve::Exponential { b: 0.0175 };
        assert!((exp.value(40.0).unwrap() - 0.496_585_303_791_409_5).abs() < 1e-12);
        assert_eq!(exp.value(0.0).unwrap(), 1.0);
        let lin = ImpactCurve::Linear { b: 0.2 };
        assert!((lin.value(2.0).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(lin.value(5.0), Err(Error::DomainExceeded { .. })));
        assert!(matches!(lin.derivative(6.0), Err(Error::DomainExceeded { .. })));
    }

    #[test]
    fn alpha_interval_examples() {
        let iv = admissible_alpha_interval(&ImpactCurve::Exponential { b: 0.0175 }, 40.0, &reg(0.1))
            .unwrap();
        assert!((iv.lower - 4.117_647_058_823_53).abs() < 1e-10);
        assert!((iv.upper - 10.0).abs() < 1e-12);
        assert!(iv.contains(5.0));
        assert!(!iv.contains(3.0));

        let none = admissible_alpha_interval(&ImpactCurve::None, 40.0, &reg(0.1)).unwrap();
        assert_eq!(none.lower, 0.0);

        let b = 1.0 / (40.0 + 1e-8);
        let hi = admissible_alpha_interval(&ImpactCurve::Exponential { b }, 40.0, &reg(0.1)).unwrap();
        assert!(hi.lower < 5.0 && hi.lower > 5.0 * (1.0 - 1e-9));
        assert!(hi.contains(5.0));
    }

    #[test]
    fn closed_form_families_pass_monotonicity() {
        for b in [0.0, 0.01, 0.5, 3.0] {
            let c = check_monotonicity_condition(&ImpactCurve::Exponential { b }, 2.0, 100);
            assert!(c.satisfied);
        }
        for b in [0.0, 0.1, 0.49] {
            let c = check_monotonicity_condition(&ImpactCurve::Linear { b }, 2.0, 100);
            assert!(c.satisfied);
        }
        assert!(!check_monotonicity_condition(&ImpactCurve::Linear { b: 0.6 }, 2.0, 100).satisfied);
    }

    #[test]
    fn tabulated_smooth_curve_passes_and_kinked_curve_fails() {
        let smooth: Vec<(f64, f64)> =
            (0..=40).map(|j| (j as f64 * 0.1, (-0.2 * j as f64 * 0.1).exp())).collect();
        let curve = ImpactCurve::Tabulated { table: MonotoneCubic::new(&smooth).unwrap() };
        let c = check_monotonicity_condition(&curve, 4.0, MONOTONICITY_GRID);
        assert!(c.satisfied, "{c:?}");

        // smooth exponential up to Γ = 2, then a sudden drop: |f'/f| spikes
        let mut kinked: Vec<(f64, f64)> =
            (0..=4).map(|j| (j as f64 * 0.5, (-0.1 * j as f64 * 0.5).exp())).collect();
        kinked.extend([(2.5, 0.5), (4.0, 0.45)]);
        let curve = ImpactCurve::Tabulated { table: MonotoneCubic::new(&kinked).unwrap() };
        let c = check_monotonicity_condition(&curve, 4.0, MONOTONICITY_GRID);
        assert!(!c.satisfied);
        let at = c.violation_at.unwrap();
        assert!(at > 1.5 && at < 2.5, "violation located at {at}");
    }

    #[test]
    fn exogenous_schedule_round_trip() {
        let impact = ImpactCurve::Exponential { b: 0.05 };
        let eta: Vec<(f64, f64)> = (0..=20).map(|j| (j as f64 * 0.1, j as f64 * 0.1)).collect();
        let ft = exogenous_to_ft(&eta, &impact).unwrap();
        for &(t, e) in &eta {
            assert!((ft.value(t) - (-0.05 * t).exp()).abs() < 1e-15);
            assert!((ft_to_exogenous(&ft, &impact, t).unwrap() - e).abs() < 1e-12);
        }

        let zero = exogenous_to_ft(&[(0.0, 0.0), (1.0, 0.0)], &impact).unwrap();
        assert!((zero.value(0.3) - 1.0).abs() < 1e-15);

        let b = 0.0175;
        let eta1 = -(0.95f64).ln() / b;
        assert!((eta1 - 2.9310).abs() < 1e-3);
        let ft = exogenous_to_ft(&[(0.0, 0.0), (1.0, eta1)], &ImpactCurve::Exponential { b })
            .unwrap();
        assert!((ft.value(1.0) - 0.95).abs() < 1e-14);

        assert!(matches!(
            exogenous_to_ft(&eta, &ImpactCurve::Linear { b: 0.1 }),
            Err(Error::NotExponentialImpact)
        ));
    }

    #[test]
    fn first_time_below_level() {
        let a = -(0.95f64).ln();
        let ft = TimeDecay::exponential(a, 1.0);
        let t = ft.first_time_at_or_below(0.99, 1.0).unwrap();
        assert!((t - (-(0.99f64).ln() / a)).abs() < 1e-14);
        assert_eq!(ft.first_time_at_or_below(0.9, 1.0), None);
        assert_eq!(ft.first_time_at_or_below(1.0, 1.0), Some(0.0));
        assert_eq!(TimeDecay::Constant.first_time_at_or_below(0.99, 1.0), None);

        let tab = TimeDecay::Tabulated {
            table: MonotoneCubic::new(&[(0.0, 1.0), (0.5, 0.97), (1.0, 0.9)]).unwrap(),
        };
        let t = tab.first_time_at_or_below(0.95, 1.0).unwrap();
        assert!((tab.value(t) - 0.95).abs() < 1e-12);
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    proptest! {
        #[test]
        fn ft_derivative_matches_finite_difference(rate in 0.0f64..2.0, t in 0.01f64..0.98) {
            let ft = TimeDecay::exponential(rate, 1.0);
            prop_assert!(rel_close(ft.derivative(t), central_diff(|s| ft.value(s), t), 1e-6));
        }

        #[test]
        fn tabulated_ft_derivative_matches_finite_difference(t in 0.01f64..1.99) {
            let pts: Vec<(f64, f64)> = (0..=8).map(|j| {
                let s = j as f64 * 0.25;
                (s, 1.0 / (1.0 + 0.3 * s * s))
            }).collect();
            let tab = MonotoneCubic::new(&pts).unwrap();
            // skip points right on top of a knot where the fd stencil straddles it
            let frac = (t / 0.25).fract();
            prop_assume!(frac > 1e-4 && frac < 1.0 - 1e-4);
            prop_assert!(rel_close(tab.derivative(t), central_diff(|s| tab.value(s), t), 1e-6));
        }

        #[test]
        fn fgamma_derivative_matches_finite_difference(b in 0.0f64..0.2, g in 0.01f64..4.0) {
            let exp = ImpactCurve::Exponential { b };
            let fd = central_diff(|x| exp.value(x).unwrap(), g);
            prop_assert!(rel_close(exp.derivative(g).unwrap(), fd, 1e-6));
            let lin = ImpactCurve::Linear { b };
            let fd = central_diff(|x| lin.value(x).unwrap(), g);
            prop_assert!(rel_close(lin.derivative(g).unwrap(), fd, 1e-6));
        }

        #[test]
        fn alpha_lower_endpoint_in_range(b in 0.0f64..10.0, m in 0.1f64..100.0, theta in 0.01f64..0.9) {
            let r = reg(theta);
            for impact in [ImpactCurve::Exponential { b }, ImpactCurve::Linear { b: b / (m * 11.0) }] {
                let iv = admissible_alpha_interval(&impact, m, &r).unwrap();
                prop_assert!(iv.lower >= 0.0 && iv.lower < iv.upper);
            }
        }

        #[test]
        fn exogenous_round_trip(steps in proptest::collection::vec(0.0f64..1.0, 1..20), b in 0.001f64..1.0) {
            let mut eta = vec![(0.0, 0.0)];
            let mut acc = 0.0;
            for (j, d) in steps.iter().enumerate() {
                acc += d;
                eta.push(((j + 1) as f64 * 0.1, acc));
            }
            let impact = ImpactCurve::Exponential { b };
            let ft = exogenous_to_ft(&eta, &impact).unwrap();
            for &(t, e) in &eta {
                prop_assert!((ft_to_exogenous(&ft, &impact, t).unwrap() - e).abs() < 1e-12);
            }
        }
    }
}
