//! Case-study drivers: parameter sweeps over the preset scenarios and the
//! CSV bundles written for each.

use std::path::{Path, PathBuf};

use crate::bounds::{bounded_liquidations, bounded_price, build_bound_schedule};
use crate::cases;
use crate::error::{Error, Result};
use crate::output;
use crate::simulator::{simulate, IntegratorConfig};
use crate::stochastic::{cdf_table, monte_carlo, Marginal, ProbabilityBound, StressDistribution};

pub const CASE_STUDIES: [&str; 4] = ["ex-20bank", "ex-probability", "ex-leverage", "ex-2asset"];

/// Integrator knobs exposed on the command line; unset fields keep the
/// defaults for the scenario's horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSettings {
    pub step: Option<f64>,
    pub output_grid: Option<usize>,
    pub event_tol: Option<f64>,
}

impl RunSettings {
    pub fn config(&self, horizon: f64) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::for_horizon(horizon);
        if let Some(h) = self.step {
            cfg.base_step = h;
        }
        if let Some(g) = self.output_grid {
            cfg.output_grid = g;
        }
        if let Some(tol) = self.event_tol {
            cfg.event_tol = tol;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseOverrides {
    /// Sweep values: `b` for ex-20bank, `λ_max` for ex-leverage, `ζ` for
    /// ex-2asset, price levels `q*` for ex-probability.
    pub grid: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyReport {
    pub name: String,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// `start, start + step, ...` up to `end` inclusive, built from integer
/// multiples to avoid drift.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|j| start + j as f64 * step).collect()
}

pub fn default_impact_grid() -> Vec<f64> {
    vec![0.0, 0.7 / 40.0, 1.0 / (40.0 + 1e-8)]
}

pub fn default_leverage_grid() -> Vec<f64> {
    linear_grid(1.05, 10.45, 0.05)
}

pub fn default_zeta_grid() -> Vec<f64> {
    linear_grid(0.0, 1.0, 0.01)
}

pub fn default_price_grid() -> Vec<f64> {
    linear_grid(0.75, 1.0, 0.0025)
}

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_190_101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactRow {
    pub b: f64,
    pub price: f64,
    pub bound_price: f64,
    pub share_active: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeverageRow {
    pub lambda_max: f64,
    pub fraction_sold: f64,
    /// Units still held at the horizon.
    pub holdings: f64,
    pub price: f64,
    pub bound_fraction_sold: f64,
    pub bound_holdings: f64,
    pub bound_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversificationRow {
    pub zeta: f64,
    pub price_1: f64,
    pub price_2: f64,
    /// `Σ_k M_k q_k(T)`.
    pub market_cap: f64,
    pub fraction_sold_1: f64,
    pub fraction_sold_2: f64,
    pub bound_price_1: f64,
    pub bound_price_2: f64,
}

pub fn leverage_sweep(grid: &[f64], run: &RunSettings) -> Result<Vec<LeverageRow>> {
    grid.iter()
        .map(|&lam| {
            let sc = cases::leverage(lam);
            let traj = simulate(&sc, &run.config(sc.horizon))?;
            let sched = build_bound_schedule(&sc)?;
            let pi = traj.terminal.pi[0];
            let bound_pi = bounded_liquidations(&sched, sc.horizon).pi[0];
            Ok(LeverageRow {
                lambda_max: lam,
                fraction_sold: pi,
                holdings: lam * (1.0 - pi),
                price: traj.terminal.q[0],
                bound_fraction_sold: bound_pi,
                bound_holdings: lam * (1.0 - bound_pi),
                bound_price: bounded_price(&sched, sc.horizon, 0)?,
            })
        })
        .collect()
}

pub fn diversification_sweep(grid: &[f64], run: &RunSettings) -> Result<Vec<DiversificationRow>> {
    grid.iter()
        .map(|&zeta| {
            let sc = cases::two_asset(zeta);
            let traj = simulate(&sc, &run.config(sc.horizon))?;
            let sched = build_bound_schedule(&sc)?;
            let q = &traj.terminal.q;
            Ok(DiversificationRow {
                zeta,
                price_1: q[0],
                price_2: q[1],
                market_cap: sc.assets.iter().zip(q).map(|(a, q)| a.market_cap * q).sum(),
                fraction_sold_1: traj.terminal.pi[0],
                fraction_sold_2: traj.terminal.pi[1],
                bound_price_1: bounded_price(&sched, sc.horizon, 0)?,
                bound_price_2: bounded_price(&sched, sc.horizon, 1)?,
            })
        })
        .collect()
}

fn argmax<T>(rows: &[T], key: impl Fn(&T) -> f64) -> Option<&T> {
    rows.iter().max_by(|a, b| key(a).total_cmp(&key(b)))
}

/// Runs one named case study and writes its CSV bundle into `out`.
pub fn run_case_study(name: &str, overrides: &CaseOverrides, out: &Path) -> Result<CaseStudyReport> {
    std::fs::create_dir_all(out)?;
    let mut report = CaseStudyReport { name: name.to_string(), files: Vec::new(), summary: Vec::new() };
    match name {
        "ex-20bank" => twenty_bank_study(overrides, out, &mut report)?,
        "ex-probability" => probability_study(overrides, out, &mut report)?,
        "ex-leverage" => {
            let grid = overrides.grid.clone().unwrap_or_else(default_leverage_grid);
            let rows = leverage_sweep(&grid, &overrides.run)?;
            let path = out.join("leverage.csv");
            output::write_table(
                &["lambda_max", "fraction_sold", "holdings", "price", "bound_fraction_sold", "bound_holdings", "bound_price"],
                &rows
                    .iter()
                    .map(|r| vec![r.lambda_max, r.fraction_sold, r.holdings, r.price, r.bound_fraction_sold, r.bound_holdings, r.bound_price])
                    .collect::<Vec<_>>(),
                &path,
            )?;
            report.files.push(path);
            if let Some(best) = argmax(&rows, |r| r.holdings) {
                report.summary.push(format!("terminal holdings peak at lambda_max = {:.2}", best.lambda_max));
            }
            if let Some(worst) = argmax(&rows, |r| r.fraction_sold) {
                report.summary.push(format!(
                    "largest fraction sold {:.4} at lambda_max = {:.2}",
                    worst.fraction_sold, worst.lambda_max
                ));
            }
        }
        "ex-2asset" => {
            let grid = overrides.grid.clone().unwrap_or_else(default_zeta_grid);
            let rows = diversification_sweep(&grid, &overrides.run)?;
            let path = out.join("two_asset.csv");
            output::write_table(
                &["zeta", "q_1", "q_2", "market_cap", "pi_1", "pi_2", "q_bound_1", "q_bound_2"],
                &rows
                    .iter()
                    .map(|r| vec![r.zeta, r.price_1, r.price_2, r.market_cap, r.fraction_sold_1, r.fraction_sold_2, r.bound_price_1, r.bound_price_2])
                    .collect::<Vec<_>>(),
                &path,
            )?;
            report.files.push(path);
            if let Some(best) = argmax(&rows, |r| r.market_cap) {
                report.summary.push(format!("total market cap peaks at zeta = {:.2}", best.zeta));
            }
            report.summary.push("multi-asset bounds are worst-case and typically loose".into());
        }
        other => return Err(Error::UnknownCaseStudy(other.to_string())),
    }
    Ok(report)
}

fn twenty_bank_study(overrides: &CaseOverrides, out: &Path, report: &mut CaseStudyReport) -> Result<()> {
    let grid = overrides.grid.clone().unwrap_or_else(default_impact_grid);
    let mut rows = Vec::with_capacity(grid.len());
    for (j, &b) in grid.iter().enumerate() {
        let sc = cases::twenty_bank(b);
        let traj = simulate(&sc, &overrides.run.config(sc.horizon))?;
        let sched = build_bound_schedule(&sc)?;
        let dir = out.join(format!("b_{j}"));
        std::fs::create_dir_all(&dir)?;
        let traj_path = dir.join("trajectory.csv");
        let hit_path = dir.join("hitting_times.csv");
        output::write_trajectory(&sc, &traj, &traj_path)?;
        output::write_hitting_times(&traj.hitting_times, &sched.hitting_times(), &hit_path)?;
        sc.save(&dir.join("scenario.json"))?;
        report.files.extend([traj_path, hit_path]);
        let active = traj.hitting_times.iter().filter(|t| t.is_some()).count();
        rows.push(ImpactRow {
            b,
            price: traj.terminal.q[0],
            bound_price: bounded_price(&sched, sc.horizon, 0)?,
            share_active: active as f64 / sc.n_banks() as f64,
        });
        report.summary.push(format!("b = {b:.6}: {active} of 20 banks hit the threshold, q(T) = {:.4}", traj.terminal.q[0]));
    }
    let path = out.join("terminal.csv");
    output::write_table(
        &["b", "price", "bound_price", "share_active"],
        &rows.iter().map(|r| vec![r.b, r.price, r.bound_price, r.share_active]).collect::<Vec<_>>(),
        &path,
    )?;
    report.files.push(path);
    Ok(())
}

fn probability_study(overrides: &CaseOverrides, out: &Path, report: &mut CaseStudyReport) -> Result<()> {
    let sc = cases::twenty_bank(cases::PROBABILITY_IMPACT);
    let dist = StressDistribution::decay_rates(vec![Marginal::Exponential { rate: cases::probability_rate() }]);
    let n = overrides.samples.unwrap_or(DEFAULT_SAMPLES);
    let seed = overrides.seed.unwrap_or(DEFAULT_SEED);
    let grid = overrides.grid.clone().unwrap_or_else(default_price_grid);
    let mc = monte_carlo(&sc, &dist, sc.horizon, n, seed)?;
    let bound = ProbabilityBound::new(&sc)?;
    let rows = cdf_table(&mc, &bound, &dist, sc.horizon, &grid)?;
    let path = out.join("cdf.csv");
    output::write_cdf(&rows, &path)?;
    sc.save(&out.join("scenario.json"))?;
    report.files.push(path);
    for q in [0.9, 0.8] {
        let bound_p = 1.0 - bound.price_cdf_lower_bound(sc.horizon, &[q], &dist)?;
        report.summary.push(format!(
            "P(q(1) <= {q}): empirical {:.4}, analytic bound {:.4}",
            mc.empirical_cdf(0, q),
            bound_p
        ));
    }
    let control = 1.0 - Marginal::Exponential { rate: cases::probability_rate() }.cdf(-(0.9f64).ln());
    report.summary.push(format!("without impact P(f_t(1) <= 0.9) = {control:.4}"));
    report.summary.push(format!("{n} draws, seed {seed}, DKW(0.99) radius {:.4}", mc.dkw_radius(0.99)));
    Ok(())
}
