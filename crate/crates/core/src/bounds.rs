//! Analytical stress-test bounds.
//!
//! Banks are ranked by decreasing threshold price. Each rank `k` gets an
//! approximate activation time `τ̃_k` and a frozen feedback multiplier `Λ̃_k`;
//! between consecutive activations every ranked bank that has started
//! selling keeps a remaining fraction
//!
//! ```text
//! R_i(t) = Π_{j ≥ i} (f_t(t ∧ τ̃_{j+1}) / f_t(t ∧ τ̃_j))^{β / Λ̃_j},   β = (1 - αθ)/(αθ)
//! ```
//!
//! of its book. The resulting liquidations dominate the true ones, so the
//! bounded prices sit below the simulated prices. For exponential impact the
//! activation levels have closed forms in terms of the Lambert W function.

use crate::error::{Error, Result};
use crate::lambert::{lambert_w, lambert_w_exp};
use crate::model::{canonical_order, threshold_price, BankBook};
use crate::scenario::Scenario;

const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    /// Closed forms where the impact curve is exponential, root-finding elsewhere.
    Auto,
    /// Root-finding on the bounded price for every asset.
    Generic,
    /// Closed forms only; fails on non-exponential impact.
    ClosedForm,
}

/// Per-asset part of a bound schedule, indexed by rank.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetBound {
    /// Approximate activation time, `INFINITY` when the rank never activates.
    pub tau: Vec<f64>,
    /// Frozen feedback multiplier; 1 for ranks that never activate.
    pub lambda: Vec<f64>,
    /// `(1 - Λ̃_k) / f_t(τ̃_k)^{β/Λ̃_k}`; 0 for ranks that never activate.
    pub nu: Vec<f64>,
    pub beta: f64,
}

impl AssetBound {
    fn gamma(&self, k: usize) -> f64 {
        self.beta / self.lambda[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSchedule {
    /// Bank indices by rank: decreasing threshold price, ties by index. Banks
    /// that can never be forced to sell are left out.
    pub order: Vec<usize>,
    /// Threshold price by rank.
    pub qbar: Vec<f64>,
    pub assets: Vec<AssetBound>,
    /// Decomposition weights `c[i][k]` by input bank index; zero rows for
    /// banks outside the ranking.
    pub weights: Vec<Vec<f64>>,
    scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedLiquidations {
    /// Units sold, `gamma[i][l]`, by input bank index.
    pub gamma: Vec<Vec<f64>>,
    /// Worst fraction sold over the assets each bank holds.
    pub pi: Vec<f64>,
}

impl BoundSchedule {
    pub fn n_ranks(&self) -> usize {
        self.order.len()
    }

    pub fn tau_tilde(&self, rank: usize, asset: usize) -> f64 {
        self.assets[asset].tau[rank]
    }

    pub fn lambda_tilde(&self, rank: usize, asset: usize) -> f64 {
        self.assets[asset].lambda[rank]
    }

    pub fn nu(&self, rank: usize, asset: usize) -> f64 {
        self.assets[asset].nu[rank]
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Bound hitting time per input bank index, `None` when it never activates.
    pub fn hitting_times(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.scenario.n_banks()];
        for (r, &i) in self.order.iter().enumerate() {
            let t = (0..self.assets.len()).map(|l| self.tau_tilde(r, l)).fold(f64::INFINITY, f64::min);
            if t.is_finite() {
                out[i] = Some(t);
            }
        }
        out
    }
}

/// `ln R` by rank at time `t`, where `R` is the remaining fraction of book.
fn log_remaining(sc: &Scenario, l: usize, ab: &AssetBound, t: f64) -> Vec<f64> {
    let time = &sc.assets[l].demand.time;
    let n = ab.tau.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        let start = ab.tau[j];
        if start <= t {
            let end = if j + 1 < n { ab.tau[j + 1].min(t) } else { t };
            acc += ab.gamma(j) * (time.value(end).ln() - time.value(start).ln());
            out[j] = acc;
        }
    }
    out
}

/// Upper bounds on the liquidations at time `t`.
pub fn bounded_liquidations(schedule: &BoundSchedule, t: f64) -> BoundedLiquidations {
    let sc = &schedule.scenario;
    let (n, m) = (sc.n_banks(), sc.n_assets());
    let mut gamma = vec![vec![0.0; m]; n];
    let mut pi = vec![0.0f64; n];
    for (l, ab) in schedule.assets.iter().enumerate() {
        let log_r = log_remaining(sc, l, ab, t);
        for (r, &i) in schedule.order.iter().enumerate() {
            let s = sc.banks[i].s[l];
            if s > 0.0 && ab.tau[r] <= t {
                let frac = -log_r[r].exp_m1();
                gamma[i][l] = s * frac;
                pi[i] = pi[i].max(frac);
            }
        }
    }
    BoundedLiquidations { gamma, pi }
}

/// Lower bound on the price of `asset` at time `t`. With several assets the
/// units sold are taken from the worst-case fractions `Π̃`, which keeps the
/// bound below the simulated price.
pub fn bounded_price(schedule: &BoundSchedule, t: f64, asset: usize) -> Result<f64> {
    let sc = &schedule.scenario;
    let liq = bounded_liquidations(schedule, t);
    let units: f64 = if sc.n_assets() == 1 {
        liq.gamma.iter().map(|g| g[asset]).sum()
    } else {
        sc.banks.iter().zip(&liq.pi).map(|(b, p)| b.s[asset] * p).sum()
    };
    sc.assets[asset].demand.price(t, units)
}

/// Shares `c_ik` of bank `book`'s shortfall attributed to each asset.
pub fn decomposition_weights(book: &BankBook, sc: &Scenario) -> Result<Vec<f64>> {
    if book.liability_gap(&sc.regulation) <= 0.0 {
        return Err(Error::NeverActivates);
    }
    let theta = sc.theta_min();
    let raw: Vec<f64> = book
        .s
        .iter()
        .zip(&sc.assets)
        .map(|(s, a)| (1.0 - a.alpha * theta) * s)
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoTradableAssets);
    }
    Ok(raw.iter().map(|c| c / total).collect())
}

fn ranking(sc: &Scenario) -> (Vec<usize>, Vec<f64>) {
    let mut order = Vec::new();
    let mut qbar = Vec::new();
    for i in canonical_order(&sc.banks, &sc.assets, &sc.regulation) {
        match threshold_price(&sc.banks[i], &sc.assets, &sc.regulation) {
            Ok(q) if q > 0.0 => {
                order.push(i);
                qbar.push(q);
            }
            _ => {}
        }
    }
    (order, qbar)
}

fn beta(sc: &Scenario, l: usize) -> f64 {
    let at = sc.assets[l].alpha * sc.theta_min();
    (1.0 - at) / at
}

/// Builds the bound schedule, using closed forms for exponential impact.
pub fn build_bound_schedule(sc: &Scenario) -> Result<BoundSchedule> {
    build_bound_schedule_with(sc, BoundMethod::Auto)
}

pub fn build_bound_schedule_with(sc: &Scenario, method: BoundMethod) -> Result<BoundSchedule> {
    sc.ensure_admissible()?;
    let (order, qbar) = ranking(sc);
    let mut assets = Vec::with_capacity(sc.n_assets());
    for l in 0..sc.n_assets() {
        let rate = sc.assets[l].demand.impact.exponential_rate();
        let ab = match (method, rate) {
            (BoundMethod::Generic, _) | (BoundMethod::Auto, None) => generic_asset(sc, l, &order, &qbar)?,
            (_, Some(_)) => closed_form_asset(sc, l)?,
            (BoundMethod::ClosedForm, None) => return Err(Error::NotExponentialImpact),
        };
        assets.push(ab);
    }
    let weights = sc
        .banks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if order.contains(&i) {
                decomposition_weights(b, sc)
            } else {
                Ok(vec![0.0; sc.n_assets()])
            }
        })
        .collect::<Result<_>>()?;
    Ok(BoundSchedule { order, qbar, assets, weights, scenario: sc.clone() })
}

fn nu_of(lambda: f64, gamma: f64, log_ft: f64) -> f64 {
    (1.0 - lambda) * (-gamma * log_ft).exp()
}

/// Root-finding form of the recursion, valid for any impact curve.
fn generic_asset(sc: &Scenario, l: usize, order: &[usize], qbar: &[f64]) -> Result<AssetBound> {
    let asset = &sc.assets[l];
    let time = &asset.demand.time;
    let horizon = sc.horizon;
    let beta = beta(sc, l);
    let s: Vec<f64> = order.iter().map(|&i| sc.banks[i].s[l]).collect();
    let n = order.len();
    let mut ab = AssetBound { tau: vec![f64::INFINITY; n], lambda: vec![1.0; n], nu: vec![0.0; n], beta };
    // remaining fractions at the latest activation time
    let mut rem = vec![1.0; n];
    let mut t_prev = 0.0;
    for k in 0..n {
        let g_prev = if k == 0 { 0.0 } else { ab.gamma(k - 1) };
        let ft_prev = time.value(t_prev);
        let units = |t: f64| -> f64 {
            let ratio = if k == 0 { 1.0 } else { (time.value(t) / ft_prev).powf(g_prev) };
            (0..k).map(|j| s[j] * (1.0 - rem[j] * ratio)).sum()
        };
        let price = |t: f64| -> Result<f64> { asset.demand.price(t, units(t)) };
        let tau = if price(t_prev)? <= qbar[k] {
            t_prev
        } else if price(horizon)? > qbar[k] {
            break;
        } else {
            let (mut lo, mut hi) = (t_prev, horizon);
            while hi - lo > ROOT_TOL {
                let mid = 0.5 * (lo + hi);
                if price(mid)? <= qbar[k] {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let ratio = if k == 0 { 1.0 } else { (time.value(tau) / ft_prev).powf(g_prev) };
        for r in rem.iter_mut().take(k) {
            *r *= ratio;
        }
        let g_units: f64 = (0..k).map(|j| s[j] * (1.0 - rem[j])).sum();
        let held: f64 = (0..=k).map(|j| s[j] * rem[j]).sum();
        let slope = asset.demand.impact.log_derivative(g_units)?;
        ab.tau[k] = tau;
        ab.lambda[k] = 1.0 + beta * held * slope;
        ab.nu[k] = nu_of(ab.lambda[k], ab.gamma(k), time.value(tau).ln());
        t_prev = tau;
    }
    Ok(ab)
}

/// Horizon-free activation levels for exponential impact, expressed through
/// `y = f_t`: rank `k` activates once the unimpacted price falls to `y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpLadder {
    pub qbar: Vec<f64>,
    pub log_y: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `ln ν_k`; `-∞` when `Λ̃_k = 1`.
    pub log_nu: Vec<f64>,
    /// `Σ_{j ≤ k} s_j`.
    pub cum_s: Vec<f64>,
    pub b: f64,
    pub beta: f64,
}

impl ExpLadder {
    pub fn len(&self) -> usize {
        self.qbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qbar.is_empty()
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.beta / self.lambda[k]
    }

    /// `W(z)` for `ln z = ln((1 - Λ̃_k)/Λ̃_k) + (β/Λ̃_k) x`, where `x` is
    /// already shifted by `-ln y_k`.
    pub(crate) fn w_term(&self, k: usize, x: f64, rank: usize, asset: usize) -> Result<f64> {
        let lam = self.lambda[k];
        let spread = 1.0 - lam;
        if spread == 0.0 {
            return Ok(0.0);
        }
        let log_abs = (spread.abs() / lam).ln() + self.gamma(k) * x;
        if spread > 0.0 {
            lambert_w_exp(log_abs)
        } else {
            lambert_w(-log_abs.exp()).map_err(|_| Error::BranchDomainError { rank, asset })
        }
    }

    /// `ln y` at which rank `k + 1` activates, given the rungs up to `k`.
    fn next_level(&self, k: Option<usize>, qbar: f64, asset: usize) -> Result<f64> {
        let Some(k) = k else {
            return Ok(qbar.ln().min(0.0));
        };
        let big_l = qbar.ln() + self.b * self.cum_s[k];
        let w = self.w_term(k, big_l - self.log_y[k], k + 1, asset)?;
        Ok((big_l - w / self.gamma(k)).min(self.log_y[k]))
    }
}

/// Builds the activation ladder of one asset with exponential impact.
pub fn exponential_ladder(sc: &Scenario, asset: usize) -> Result<ExpLadder> {
    let b = sc.assets[asset].demand.impact.exponential_rate().ok_or(Error::NotExponentialImpact)?;
    let (order, qbar) = ranking(sc);
    let beta = beta(sc, asset);
    let s: Vec<f64> = order.iter().map(|&i| sc.banks[i].s[asset]).collect();
    let n = order.len();
    let mut ladder = ExpLadder {
        qbar: Vec::with_capacity(n),
        log_y: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        log_nu: Vec::with_capacity(n),
        cum_s: Vec::with_capacity(n),
        b,
        beta,
    };
    // ln R_j at the latest rung
    let mut log_rem: Vec<f64> = Vec::with_capacity(n);
    for k in 0..n {
        let prev = k.checked_sub(1);
        let log_y = ladder.next_level(prev, qbar[k], asset)?;
        if let Some(p) = prev {
            let step = ladder.gamma(p) * (log_y - ladder.log_y[p]);
            for r in log_rem.iter_mut() {
                *r += step;
            }
        }
        log_rem.push(0.0);
        let held: f64 = (0..=k).map(|j| s[j] * log_rem[j].exp()).sum();
        let lambda = 1.0 - b * beta * held;
        let gamma = beta / lambda;
        ladder.qbar.push(qbar[k]);
        ladder.log_y.push(log_y);
        ladder.lambda.push(lambda);
        ladder.log_nu.push((1.0 - lambda).ln() - gamma * log_y);
        ladder.cum_s.push(ladder.cum_s.last().copied().unwrap_or(0.0) + s[k]);
    }
    Ok(ladder)
}

fn closed_form_asset(sc: &Scenario, l: usize) -> Result<AssetBound> {
    let ladder = exponential_ladder(sc, l)?;
    let time = &sc.assets[l].demand.time;
    let floor = time.value(sc.horizon).ln();
    let n = ladder.len();
    let mut ab = AssetBound {
        tau: vec![f64::INFINITY; n],
        lambda: vec![1.0; n],
        nu: vec![0.0; n],
        beta: ladder.beta,
    };
    let mut t_prev: f64 = 0.0;
    for k in 0..n {
        let log_y = ladder.log_y[k];
        if log_y < floor {
            break;
        }
        let t = time.first_time_at_or_below(log_y.exp(), sc.horizon).unwrap_or(sc.horizon);
        let tau = t.max(t_prev);
        ab.tau[k] = tau;
        ab.lambda[k] = ladder.lambda[k];
        ab.nu[k] = nu_of(ab.lambda[k], ladder.gamma(k), time.value(tau).ln());
        t_prev = tau;
    }
    Ok(ab)
}

/// Closed-form activation time of `rank` (0-based) for an asset with
/// exponential impact, from the schedule's earlier ranks.
pub fn exp_hitting_time(schedule: &BoundSchedule, rank: usize, asset: usize) -> Result<f64> {
    let sc = &schedule.scenario;
    let ladder = exponential_ladder(sc, asset)?;
    let time = &sc.assets[asset].demand.time;
    let log_y = ladder.next_level(rank.checked_sub(1), ladder.qbar[rank], asset)?;
    if log_y < time.value(sc.horizon).ln() {
        return Ok(f64::INFINITY);
    }
    let t = time.first_time_at_or_below(log_y.exp(), sc.horizon).unwrap_or(sc.horizon);
    let prev = if rank == 0 { 0.0 } else { schedule.tau_tilde(rank - 1, asset) };
    Ok(t.max(prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::simulator::{simulate, IntegratorConfig};

    const TABLE_BOUNDS_MID: [f64; 18] = [
        0.0000, 0.0794, 0.1562, 0.2305, 0.3023, 0.3715, 0.4381, 0.5021, 0.5635, 0.6223, 0.6785,
        0.7321, 0.7830, 0.8313, 0.8770, 0.9199, 0.9602, 0.9978,
    ];

    #[test]
    fn single_rank_base_case() {
        let sc = cases::leverage(3.0);
        let sched = build_bound_schedule(&sc).unwrap();
        assert_eq!(sched.tau_tilde(0, 0), 0.0);
        let b = cases::leverage_impact();
        let expect = 1.0 - 2.0 * 3.0 * b;
        assert!((sched.lambda_tilde(0, 0) - expect).abs() < 1e-14);
    }

    #[test]
    fn no_impact_bounds_equal_inverse_decay() {
        let sc = cases::twenty_bank(0.0);
        let sched = build_bound_schedule(&sc).unwrap();
        let a = cases::base_decay_rate();
        for k in 0..20 {
            let qbar = 1.0 - 2.0 * k as f64 / 475.0;
            let exact = -qbar.ln() / a;
            let tau = sched.tau_tilde(k, 0);
            if exact <= 1.0 {
                assert!((tau - exact).abs() < 1e-12, "rank {k}");
            } else {
                assert!(tau.is_infinite(), "rank {k}");
            }
            assert_eq!(sched.lambda_tilde(k, 0), 1.0);
        }
        let liq = bounded_liquidations(&sched, 1.0);
        for (i, g) in liq.gamma.iter().enumerate() {
            let qbar = 1.0 - 2.0 * i as f64 / 475.0;
            let expect = if qbar >= 0.95 { 2.0 * (1.0 - 0.95 / qbar) } else { 0.0 };
            assert!((g[0] - expect).abs() < 1e-12, "bank {i}");
        }
        assert!((bounded_price(&sched, 1.0, 0).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(bounded_price(&sched, 0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn mid_impact_matches_table() {
        let sched = build_bound_schedule(&cases::twenty_bank(0.7 / 40.0)).unwrap();
        for (k, expect) in TABLE_BOUNDS_MID.iter().enumerate() {
            assert!((sched.tau_tilde(k, 0) - expect).abs() < 1e-3, "rank {k}");
        }
        assert!(sched.tau_tilde(18, 0).is_infinite());
        assert!((exp_hitting_time(&sched, 4, 0).unwrap() - 0.3023).abs() < 1e-3);
    }

    #[test]
    fn high_impact_last_firms() {
        let sched = build_bound_schedule(&cases::twenty_bank(1.0 / (40.0 + 1e-8))).unwrap();
        assert!((sched.tau_tilde(18, 0) - 0.8164).abs() < 1e-3);
        assert!((sched.tau_tilde(19, 0) - 0.8242).abs() < 1e-3);
    }

    #[test]
    fn closed_form_and_root_finding_agree() {
        for sc in [cases::twenty_bank(0.7 / 40.0), cases::twenty_bank(1.0 / (40.0 + 1e-8)), cases::two_asset(0.3)] {
            let a = build_bound_schedule_with(&sc, BoundMethod::ClosedForm).unwrap();
            let g = build_bound_schedule_with(&sc, BoundMethod::Generic).unwrap();
            for (x, y) in a.assets.iter().zip(&g.assets) {
                for (t1, t2) in x.tau.iter().zip(&y.tau) {
                    assert!(t1 == t2 || (t1 - t2).abs() < 1e-9, "{t1} vs {t2}");
                }
                for (l1, l2) in x.lambda.iter().zip(&y.lambda) {
                    assert!((l1 - l2).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ladder_does_not_depend_on_decay_rate() {
        let b = cases::PROBABILITY_IMPACT;
        let a = exponential_ladder(&cases::twenty_bank_with_rate(0.02, b), 0).unwrap();
        let c = exponential_ladder(&cases::twenty_bank_with_rate(0.2, b), 0).unwrap();
        assert_eq!(a, c);
        let s1 = build_bound_schedule(&cases::twenty_bank_with_rate(0.2, b)).unwrap();
        let s2 = build_bound_schedule(&cases::twenty_bank_with_rate(0.3, b)).unwrap();
        for k in 0..20 {
            if s1.tau_tilde(k, 0).is_finite() && s2.tau_tilde(k, 0).is_finite() {
                assert!((s1.lambda_tilde(k, 0) - s2.lambda_tilde(k, 0)).abs() < 1e-12);
                assert!((s1.nu(k, 0) - s2.nu(k, 0)).abs() < 1e-12 * s1.nu(k, 0).abs().max(1.0));
            }
        }
    }

    #[test]
    fn bounds_dominate_simulation() {
        for b in [0.5 / 40.0, cases::PROBABILITY_IMPACT] {
            let sc = cases::twenty_bank(b);
            let sched = build_bound_schedule(&sc).unwrap();
            let traj = simulate(&sc, &IntegratorConfig::for_horizon(1.0)).unwrap();
            for s in traj.samples.iter().step_by(10) {
                let liq = bounded_liquidations(&sched, s.t);
                for (p, pt) in s.pi.iter().zip(&liq.pi) {
                    assert!(*pt >= p - 1e-9);
                }
                assert!(bounded_price(&sched, s.t, 0).unwrap() <= s.q[0] + 1e-9);
            }
            let gap = traj.terminal.q[0] - bounded_price(&sched, 1.0, 0).unwrap();
            assert!(gap < 0.005, "b={b}: gap {gap}");
        }
    }

    #[test]
    fn leverage_bound_dominates() {
        let sc = cases::leverage(4.0);
        let sched = build_bound_schedule(&sc).unwrap();
        let traj = simulate(&sc, &IntegratorConfig::for_horizon(1.0)).unwrap();
        assert!(traj.terminal.pi[0] <= bounded_liquidations(&sched, 1.0).pi[0] + 1e-12);
    }

    #[test]
    fn decomposition_weight_examples() {
        let sc = cases::twenty_bank(0.0);
        assert_eq!(decomposition_weights(&sc.banks[3], &sc).unwrap(), vec![1.0]);
        let sc = cases::two_asset(1.0);
        assert_eq!(decomposition_weights(&sc.banks[0], &sc).unwrap(), vec![0.5, 0.5]);
        let sc = cases::two_asset(0.3);
        let c = decomposition_weights(&sc.banks[0], &sc).unwrap();
        assert!((c[0] - 0.85).abs() < 1e-15 && (c[1] - 0.15).abs() < 1e-15);
        let mut rich = sc.banks[0].clone();
        rich.x = 1.0;
        assert!(matches!(decomposition_weights(&rich, &sc), Err(Error::NeverActivates)));
    }
}
