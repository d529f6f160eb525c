//! Event-driven integration of the liquidation dynamics on `[0, T]`.
//!
//! Between activations the state `(Π, Ψ)` is advanced with classical RK4;
//! prices are algebraic in `Π`. Activation times are located by bisection on
//! the activation margins and integration restarts cleanly at each event.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{self, DEFAULT_LAMBDA_FLOOR};
use crate::error::{Error, Result};
use crate::model::{activation_margin, capital_ratio, SystemState, Trajectory};
use crate::scenario::Scenario;

/// Margin at or below which a bank counts as sitting on the threshold.
const ACTIVATION_SLACK: f64 = 1e-12;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub base_step: f64,
    pub event_tol: f64,
    pub constraint_tol: f64,
    pub output_grid: usize,
    pub lambda_floor: f64,
    /// Step halvings attempted after a constraint drift before giving up.
    pub max_retries: u32,
}

impl IntegratorConfig {
    pub fn for_horizon(horizon: f64) -> Self {
        Self {
            base_step: horizon / 2000.0,
            event_tol: 1e-10,
            constraint_tol: 1e-8,
            output_grid: 501,
            lambda_floor: DEFAULT_LAMBDA_FLOOR,
            max_retries: 6,
        }
    }

    fn check(&self) -> Result<()> {
        let positive = [self.base_step, self.event_tol, self.constraint_tol, self.lambda_floor]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidArgument("integrator tolerances and step must be positive".into()));
        }
        if self.event_tol >= self.base_step {
            return Err(Error::InvalidArgument(format!(
                "event_tol {} must be smaller than base_step {}",
                self.event_tol, self.base_step
            )));
        }
        if self.output_grid < 2 {
            return Err(Error::InvalidArgument("output grid needs at least 2 points".into()));
        }
        Ok(())
    }
}

/// Integrated variables. Prices are recovered from `pi`.
#[derive(Debug, Clone, PartialEq)]
struct Flow {
    pi: Vec<f64>,
    psi: Vec<f64>,
}

impl Flow {
    fn zeros(n: usize) -> Self {
        Flow { pi: vec![0.0; n], psi: vec![0.0; n] }
    }

    fn axpy(&self, a: f64, d: &Flow) -> Flow {
        Flow {
            pi: self.pi.iter().zip(&d.pi).map(|(y, v)| y + a * v).collect(),
            psi: self.psi.iter().zip(&d.psi).map(|(y, v)| y + a * v).collect(),
        }
    }
}

struct Integrator<'a> {
    sc: &'a Scenario,
    cfg: &'a IntegratorConfig,
    /// Banks that can ever reach the threshold.
    tradable: Vec<bool>,
}

impl<'a> Integrator<'a> {
    fn new(sc: &'a Scenario, cfg: &'a IntegratorConfig) -> Self {
        let tradable = sc
            .banks
            .iter()
            .map(|b| b.weighted_holdings(&sc.assets, &sc.regulation) > 0.0)
            .collect();
        Integrator { sc, cfg, tradable }
    }

    fn deriv(&self, t: f64, y: &Flow, active: &[bool]) -> Result<Flow> {
        let d = dynamics::rhs(self.sc, t, &y.pi, active, self.cfg.lambda_floor)?;
        Ok(Flow { pi: d.pi_dot, psi: d.psi_dot })
    }

    fn rk4(&self, t: f64, y: &Flow, active: &[bool], h: f64) -> Result<Flow> {
        let k1 = self.deriv(t, y, active)?;
        let k2 = self.deriv(t + 0.5 * h, &y.axpy(0.5 * h, &k1), active)?;
        let k3 = self.deriv(t + 0.5 * h, &y.axpy(0.5 * h, &k2), active)?;
        let k4 = self.deriv(t + h, &y.axpy(h, &k3), active)?;
        let n = y.pi.len();
        let mut out = y.clone();
        for i in 0..n {
            out.pi[i] += h / 6.0 * (k1.pi[i] + 2.0 * k2.pi[i] + 2.0 * k3.pi[i] + k4.pi[i]);
            out.psi[i] += h / 6.0 * (k1.psi[i] + 2.0 * k2.psi[i] + 2.0 * k3.psi[i] + k4.psi[i]);
        }
        Ok(out)
    }

    /// Advances by `dt` in equal substeps no longer than the base step.
    fn advance(&self, t: f64, y: &Flow, active: &[bool], dt: f64, h: f64) -> Result<Flow> {
        if dt <= 0.0 || !active.iter().any(|&a| a) {
            return Ok(y.clone());
        }
        let steps = (dt / h).ceil().max(1.0) as usize;
        let sub = dt / steps as f64;
        let mut cur = y.clone();
        for j in 0..steps {
            cur = self.rk4(t + j as f64 * sub, &cur, active, sub)?;
        }
        Ok(cur)
    }

    fn margins(&self, q: &[f64], active: &[bool]) -> impl Iterator<Item = (usize, f64)> + '_ {
        let q = q.to_vec();
        let active = active.to_vec();
        (0..self.sc.n_banks()).filter(move |&i| !active[i] && self.tradable[i]).map(move |i| {
            (i, activation_margin(&self.sc.banks[i], &self.sc.assets, &self.sc.regulation, &q))
        })
    }

    fn min_margin(&self, q: &[f64], active: &[bool]) -> f64 {
        self.margins(q, active).map(|(_, g)| g).fold(f64::INFINITY, f64::min)
    }

    fn newly_active(&self, q: &[f64], active: &[bool]) -> Vec<usize> {
        self.margins(q, active).filter(|(_, g)| *g <= ACTIVATION_SLACK).map(|(i, _)| i).collect()
    }

    /// Earliest `δ ∈ (0, dt]` at which an inactive bank's margin reaches zero,
    /// given that it has by `dt`.
    fn bisect_event(&self, t: f64, y: &Flow, active: &[bool], dt: f64, h: f64) -> Result<(f64, Flow)> {
        let (mut lo, mut hi) = (0.0, dt);
        let mut y_hi = self.advance(t, y, active, dt, h)?;
        while hi - lo > self.cfg.event_tol {
            let mid = 0.5 * (lo + hi);
            let y_mid = self.advance(t, y, active, mid, h)?;
            let q = self.sc.prices(t + mid, &y_mid.pi)?;
            if self.min_margin(&q, active) <= 0.0 {
                hi = mid;
                y_hi = y_mid;
            } else {
                lo = mid;
            }
        }
        Ok((hi, y_hi))
    }

    /// Exact solution while nobody sells: `Π = 0`, `q = f_t`.
    fn first_quiet_crossing(&self, t0: f64, horizon: f64, active: &[bool]) -> Result<Option<f64>> {
        let zero = vec![0.0; self.sc.n_banks()];
        let margin = |t: f64| -> Result<f64> { Ok(self.min_margin(&self.sc.prices(t, &zero)?, active)) };
        if margin(horizon)? > 0.0 {
            return Ok(None);
        }
        let (mut lo, mut hi) = (t0, horizon);
        while hi - lo > self.cfg.event_tol {
            let mid = 0.5 * (lo + hi);
            if margin(mid)? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }

    fn check_step(&self, t: f64, before: &Flow, after: &Flow, q_before: &[f64], q_after: &[f64]) -> Result<()> {
        for (i, (p0, p1)) in before.pi.iter().zip(&after.pi).enumerate() {
            if *p1 < p0 - MONOTONE_SLACK {
                return Err(Error::MonotonicityViolation {
                    t,
                    detail: format!("bank {i} liquidated fraction fell from {p0} to {p1}"),
                });
            }
            if *p1 >= 1.0 {
                return Err(Error::MonotonicityViolation {
                    t,
                    detail: format!("bank {i} sold its entire tradable book"),
                });
            }
        }
        for (k, (q0, q1)) in q_before.iter().zip(q_after).enumerate() {
            if *q1 > q0 + MONOTONE_SLACK * q0.abs().max(1.0) {
                return Err(Error::MonotonicityViolation {
                    t,
                    detail: format!("price of asset {k} rose from {q0} to {q1}"),
                });
            }
        }
        Ok(())
    }

    fn run(&self, h: f64) -> Result<Trajectory> {
        let sc = self.sc;
        let (n, horizon) = (sc.n_banks(), sc.horizon);
        let grid_len = self.cfg.output_grid;
        let grid_t = |j: usize| {
            if j + 1 == grid_len {
                horizon
            } else {
                horizon * j as f64 / (grid_len - 1) as f64
            }
        };
        let merge_tol = 1e-12 * horizon.max(1.0);

        let mut samples: Vec<SystemState> = Vec::with_capacity(grid_len + n);
        let mut push = |s: SystemState, event: bool| match samples.last_mut() {
            Some(last) if (last.t - s.t).abs() <= merge_tol => {
                if event {
                    *last = s;
                }
            }
            _ => samples.push(s),
        };

        let mut t = 0.0;
        let mut y = Flow::zeros(n);
        let mut active = vec![false; n];
        let mut hitting = vec![None; n];
        let mut next_grid = 0usize;

        push(state_at(sc, 0.0, &y.pi, &y.psi, &active)?, false);
        next_grid += 1;
        let q0 = sc.prices(0.0, &y.pi)?;
        let start = self.newly_active(&q0, &active);
        if !start.is_empty() {
            for i in start {
                active[i] = true;
                hitting[i] = Some(0.0);
            }
            push(state_at(sc, 0.0, &y.pi, &y.psi, &active)?, true);
        }

        // restart time of the current RK4 step sequence
        let mut origin = 0.0;
        let mut step_index = 0u64;
        while t < horizon {
            if !active.iter().any(|&a| a) {
                let event = self.first_quiet_crossing(t, horizon, &active)?;
                let stop = event.unwrap_or(horizon);
                while next_grid < grid_len && grid_t(next_grid) <= stop {
                    push(state_at(sc, grid_t(next_grid), &y.pi, &y.psi, &active)?, false);
                    next_grid += 1;
                }
                t = stop;
                if let Some(tau) = event {
                    let q = sc.prices(tau, &y.pi)?;
                    for i in self.newly_active(&q, &active) {
                        active[i] = true;
                        hitting[i] = Some(tau);
                    }
                    push(state_at(sc, tau, &y.pi, &y.psi, &active)?, true);
                    origin = tau;
                    step_index = 0;
                }
                continue;
            }

            let t_end = (origin + (step_index + 1) as f64 * h).min(horizon);
            let dt = t_end - t;
            if dt <= 0.0 {
                break;
            }
            let q_before = sc.prices(t, &y.pi)?;
            let full = self.rk4(t, &y, &active, dt)?;
            let q_full = sc.prices(t_end, &full.pi)?;
            let (stop, mut y_new, event) = if self.min_margin(&q_full, &active) <= 0.0 {
                let (delta, y_ev) = self.bisect_event(t, &y, &active, dt, h)?;
                (t + delta, y_ev, true)
            } else {
                (t_end, full, false)
            };
            let q_new = sc.prices(stop, &y_new.pi)?;
            self.check_step(stop, &y, &y_new, &q_before, &q_new)?;
            renormalize(sc, stop, &mut y_new.pi, &y_new.psi, &active, self.cfg.constraint_tol, false)?;

            while next_grid < grid_len && grid_t(next_grid) <= stop {
                let tg = grid_t(next_grid);
                let yg = if tg == stop { y_new.clone() } else { self.rk4(t, &y, &active, tg - t)? };
                push(state_at(sc, tg, &yg.pi, &yg.psi, &active)?, false);
                next_grid += 1;
            }
            t = stop;
            y = y_new;
            if event {
                let q = sc.prices(t, &y.pi)?;
                for i in self.newly_active(&q, &active) {
                    active[i] = true;
                    hitting[i] = Some(t);
                }
                push(state_at(sc, t, &y.pi, &y.psi, &active)?, true);
                origin = t;
                step_index = 0;
            } else {
                step_index += 1;
            }
        }

        let terminal = samples.last().cloned().expect("grid has at least two points");
        Ok(Trajectory { samples, hitting_times: hitting, terminal })
    }
}

/// Builds the full state record from the integrated variables.
pub fn state_at(sc: &Scenario, t: f64, pi: &[f64], psi: &[f64], active: &[bool]) -> Result<SystemState> {
    Ok(SystemState {
        t,
        pi: pi.to_vec(),
        gamma: sc.banks.iter().zip(pi).map(|(b, p)| b.s.iter().map(|s| s * p).collect()).collect(),
        q: sc.prices(t, pi)?,
        psi: psi.to_vec(),
        active: active.to_vec(),
    })
}

/// Capital ratio of every bank in `state`.
pub fn capital_ratios(sc: &Scenario, state: &SystemState) -> Result<Vec<f64>> {
    sc.banks
        .iter()
        .enumerate()
        .map(|(i, b)| capital_ratio(b, state.pi[i], &state.q, state.psi[i], &sc.assets))
        .collect()
}

/// Integrates the scenario over `[0, T]`, halving the step after a
/// constraint drift up to `max_retries` times.
pub fn simulate(sc: &Scenario, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.check()?;
    sc.ensure_admissible()?;
    let integrator = Integrator::new(sc, cfg);
    let mut h = cfg.base_step;
    let mut attempt = 0;
    loop {
        match integrator.run(h) {
            Err(Error::ConstraintDrift { .. }) if attempt < cfg.max_retries => {
                attempt += 1;
                h *= 0.5;
            }
            other => return other,
        }
    }
}

/// Integrates from `start` towards `t_hi` and returns the first activation
/// time in `(start.t, t_hi]` with every bank whose margin is nonpositive
/// there. The caller guarantees that some margin changes sign.
pub fn locate_activation(
    sc: &Scenario,
    cfg: &IntegratorConfig,
    start: &SystemState,
    t_hi: f64,
) -> Result<(f64, Vec<usize>)> {
    let integrator = Integrator::new(sc, cfg);
    let y = Flow { pi: start.pi.clone(), psi: start.psi.clone() };
    let (delta, y_ev) = integrator.bisect_event(start.t, &y, &start.active, t_hi - start.t, cfg.base_step)?;
    let tau = start.t + delta;
    let q = sc.prices(tau, &y_ev.pi)?;
    Ok((tau, integrator.newly_active(&q, &start.active)))
}

/// `Σ_k (1 - α_k θ) s_ik (1 - π_i) q_k - gap_i + ψ_i`, zero exactly on the
/// constraint manifold and smooth in `Π`.
fn surplus(sc: &Scenario, i: usize, pi: f64, psi: f64, q: &[f64]) -> f64 {
    let b = &sc.banks[i];
    let theta = sc.theta_min();
    let held: f64 = (0..sc.n_assets())
        .map(|k| (1.0 - sc.assets[k].alpha * theta) * b.s[k] * (1.0 - pi) * q[k])
        .sum();
    held - b.liability_gap(&sc.regulation) + psi
}

fn worst_residual(sc: &Scenario, t: f64, pi: &[f64], psi: &[f64], active: &[bool]) -> Result<(usize, f64)> {
    let q = sc.prices(t, pi)?;
    let theta = sc.theta_min();
    let mut worst = (0, 0.0);
    for i in (0..sc.n_banks()).filter(|&i| active[i]) {
        let r = (capital_ratio(&sc.banks[i], pi[i], &q, psi[i], &sc.assets)? - theta).abs();
        if r > worst.1 {
            worst = (i, r);
        }
    }
    Ok(worst)
}

/// One Newton step on the active surpluses with `Ψ` and `t` held fixed.
fn newton_project(sc: &Scenario, t: f64, pi: &mut [f64], psi: &[f64], active: &[bool]) -> Result<()> {
    let idx: Vec<usize> = (0..sc.n_banks()).filter(|&i| active[i]).collect();
    if idx.is_empty() {
        return Ok(());
    }
    let theta = sc.theta_min();
    let m = sc.n_assets();
    let units = sc.units_sold(pi);
    let mut q = Vec::with_capacity(m);
    let mut dq = Vec::with_capacity(m);
    for (a, g) in sc.assets.iter().zip(&units) {
        let ft = a.demand.eval_ft(t);
        q.push(ft * a.demand.eval_fgamma(*g)?);
        dq.push(ft * a.demand.eval_fgamma_prime(*g)?);
    }
    let w = |i: usize, k: usize| (1.0 - sc.assets[k].alpha * theta) * sc.banks[i].s[k];
    let na = idx.len();
    let jac = DMatrix::from_fn(na, na, |r, c| {
        let (i, j) = (idx[r], idx[c]);
        let through_price: f64 = (0..m).map(|k| w(i, k) * (1.0 - pi[i]) * dq[k] * sc.banks[j].s[k]).sum();
        let own: f64 = if r == c { (0..m).map(|k| w(i, k) * q[k]).sum() } else { 0.0 };
        through_price - own
    });
    let f = DVector::from_fn(na, |r, _| surplus(sc, idx[r], pi[idx[r]], psi[idx[r]], &q));
    let step = jac.lu().solve(&f).ok_or(Error::LinearSolveFailure { t })?;
    for (r, &i) in idx.iter().enumerate() {
        pi[i] -= step[r];
    }
    Ok(())
}

fn renormalize(
    sc: &Scenario,
    t: f64,
    pi: &mut [f64],
    psi: &[f64],
    active: &[bool],
    tol: f64,
    always: bool,
) -> Result<()> {
    let (bank, residual) = worst_residual(sc, t, pi, psi, active)?;
    if residual > 10.0 * tol {
        return Err(Error::ConstraintDrift { bank, t, residual });
    }
    if residual > tol || (always && residual > 0.0) {
        newton_project(sc, t, pi, psi, active)?;
    }
    Ok(())
}

/// Checks the active banks' constraint residuals. Residuals in
/// `(tol, 10·tol]` trigger one Newton projection of `Π`; larger ones are a
/// `ConstraintDrift`.
pub fn renormalize_active(sc: &Scenario, state: &SystemState, tol: f64) -> Result<SystemState> {
    let mut pi = state.pi.clone();
    renormalize(sc, state.t, &mut pi, &state.psi, &state.active, tol, false)?;
    state_at(sc, state.t, &pi, &state.psi, &state.active)
}

/// Projects the active banks back onto the constraint manifold regardless
/// of the size of the residual, iterating Newton until it stalls.
pub fn project_active(sc: &Scenario, state: &SystemState) -> Result<SystemState> {
    let mut pi = state.pi.clone();
    for _ in 0..8 {
        let (_, residual) = worst_residual(sc, state.t, &pi, &state.psi, &state.active)?;
        if residual <= 1e-15 {
            break;
        }
        newton_project(sc, state.t, &mut pi, &state.psi, &state.active)?;
    }
    state_at(sc, state.t, &pi, &state.psi, &state.active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::demand::{ImpactCurve, TimeDecay};

    fn run(sc: &Scenario) -> Trajectory {
        simulate(sc, &IntegratorConfig::for_horizon(sc.horizon)).unwrap()
    }

    #[test]
    fn no_stress_means_no_sales() {
        let mut sc = cases::twenty_bank(0.7 / 40.0);
        sc.assets[0].demand.time = TimeDecay::Constant;
        let traj = run(&sc);
        // firm 1 sits on the threshold from the start but never has to sell
        assert_eq!(traj.hitting_times[0], Some(0.0));
        assert!(traj.hitting_times[1..].iter().all(Option::is_none));
        for s in &traj.samples {
            assert_eq!(s.q, vec![1.0]);
            assert!(s.pi.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn no_impact_hitting_times_match_inverse_decay() {
        let sc = cases::twenty_bank(0.0);
        let traj = run(&sc);
        let a = -(0.95f64).ln();
        for (i, tau) in traj.hitting_times.iter().enumerate() {
            let qbar = 1.0 - 2.0 * i as f64 / 475.0;
            let exact = -qbar.ln() / a;
            if exact <= 1.0 {
                assert!((tau.unwrap() - exact).abs() < 1e-8, "bank {i}");
            } else {
                assert!(tau.is_none(), "bank {i}");
            }
        }
        assert_eq!(traj.samples.len(), 501 + 11);
    }

    #[test]
    fn no_impact_liquidations_match_closed_form() {
        let sc = cases::twenty_bank(0.0);
        let traj = run(&sc);
        let beta = 1.0;
        for s in &traj.samples {
            for (i, tau) in traj.hitting_times.iter().enumerate() {
                let qbar = 1.0 - 2.0 * i as f64 / 475.0;
                let expect = match tau {
                    Some(t0) if *t0 <= s.t => 1.0 - (s.q[0] / qbar).powf(beta),
                    _ => 0.0,
                };
                assert!((s.pi[i] - expect).abs() < 1e-8, "bank {i} at {}", s.t);
            }
        }
    }

    #[test]
    fn mid_impact_hitting_times() {
        let sc = cases::twenty_bank(0.7 / 40.0);
        let traj = run(&sc);
        assert!((traj.hitting_times[17].unwrap() - 0.9981).abs() < 1e-3);
        assert!(traj.hitting_times[18].is_none());
        assert!(traj.hitting_times[19].is_none());
    }

    #[test]
    fn identical_banks_activate_together() {
        let mut sc = cases::twenty_bank(0.5 / 40.0);
        sc.banks[3] = sc.banks[2].clone();
        let traj = run(&sc);
        assert_eq!(traj.hitting_times[2], traj.hitting_times[3]);
        assert!(traj.hitting_times[2].is_some());
    }

    #[test]
    fn locate_activation_brackets_second_bank() {
        let sc = cases::twenty_bank(0.0);
        let cfg = IntegratorConfig::for_horizon(1.0);
        let mut active = vec![false; 20];
        active[0] = true;
        let start = state_at(&sc, 0.0, &[0.0; 20], &[0.0; 20], &active).unwrap();
        let (tau, banks) = locate_activation(&sc, &cfg, &start, 0.2).unwrap();
        let exact = -(1.0 - 2.0 / 475.0f64).ln() / -(0.95f64).ln();
        assert!((tau - exact).abs() < 1e-9);
        assert_eq!(banks, vec![1]);
    }

    #[test]
    fn renormalize_examples() {
        let sc = cases::twenty_bank(0.7 / 40.0);
        let traj = run(&sc);
        let s = traj.samples.iter().find(|s| s.t >= 0.5).unwrap().clone();
        let same = renormalize_active(&sc, &s, 1e-8).unwrap();
        assert_eq!(same.pi, s.pi);

        let mut bumped = s.clone();
        bumped.pi[0] += 1e-9;
        let fixed = project_active(&sc, &state_at(&sc, s.t, &bumped.pi, &s.psi, &s.active).unwrap()).unwrap();
        let ratios = capital_ratios(&sc, &fixed).unwrap();
        for (i, r) in ratios.iter().enumerate().filter(|(i, _)| s.active[*i]) {
            assert!((r - 0.1).abs() < 1e-12, "bank {i}: {r}");
        }

        let mut far = s.clone();
        far.pi[0] += 1e-3;
        let far = state_at(&sc, s.t, &far.pi, &s.psi, &s.active).unwrap();
        assert!(matches!(renormalize_active(&sc, &far, 1e-8), Err(Error::ConstraintDrift { .. })));
    }

    #[test]
    fn near_singular_impact_completes() {
        let sc = cases::twenty_bank(1.0 / (40.0 + 1e-8));
        let traj = run(&sc);
        assert!((traj.hitting_times[19].unwrap() - 0.8252).abs() < 1e-3);
    }

    #[test]
    fn inadmissible_impact_is_rejected() {
        let mut sc = cases::twenty_bank(0.0);
        sc.assets[0].demand.impact = ImpactCurve::Exponential { b: 0.05 };
        assert!(matches!(
            simulate(&sc, &IntegratorConfig::for_horizon(1.0)),
            Err(Error::InadmissibleScenario(_))
        ));
    }
}
