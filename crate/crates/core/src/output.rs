//! CSV artifacts. Floats are written in scientific notation with 17
//! significant digits so they round-trip exactly.

use std::fs::File;
use std::path::Path;

use csv::Writer;

use crate::bounds::{bounded_liquidations, bounded_price, BoundSchedule};
use crate::error::Result;
use crate::model::Trajectory;
use crate::scenario::Scenario;
use crate::simulator::capital_ratios;
use crate::stochastic::CdfRow;

/// Marker written for banks that never reach the threshold.
pub const NEVER: &str = "never";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_time(v: Option<f64>) -> String {
    v.map_or_else(|| NEVER.to_string(), fmt_f64)
}

fn writer(path: &Path) -> Result<Writer<File>> {
    Ok(Writer::from_path(path)?)
}

pub fn trajectory_header(n_banks: usize, n_assets: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n_assets).map(|k| format!("q_{k}")));
    for i in 1..=n_banks {
        h.extend([format!("pi_{i}"), format!("psi_{i}"), format!("theta_{i}"), format!("active_{i}")]);
    }
    h
}

/// `t, q_1..q_m`, then `pi_i, psi_i, theta_i, active_i` for every bank.
pub fn write_trajectory(sc: &Scenario, traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(trajectory_header(sc.n_banks(), sc.n_assets()))?;
    for s in &traj.samples {
        let theta = capital_ratios(sc, s)?;
        let mut row = vec![fmt_f64(s.t)];
        row.extend(s.q.iter().map(|q| fmt_f64(*q)));
        for i in 0..sc.n_banks() {
            row.extend([
                fmt_f64(s.pi[i]),
                fmt_f64(s.psi[i]),
                fmt_f64(theta[i]),
                u8::from(s.active[i]).to_string(),
            ]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `bank, tau, tau_bound` with 1-based bank numbers.
pub fn write_hitting_times(simulated: &[Option<f64>], bound: &[Option<f64>], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["bank", "tau", "tau_bound"])?;
    for (i, (tau, tb)) in simulated.iter().zip(bound).enumerate() {
        w.write_record([(i + 1).to_string(), fmt_time(*tau), fmt_time(*tb)])?;
    }
    w.flush()?;
    Ok(())
}

/// `rank, bank, asset, qbar, tau_tilde, lambda_tilde, nu`.
pub fn write_bound_schedule(schedule: &BoundSchedule, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["rank", "bank", "asset", "qbar", "tau_tilde", "lambda_tilde", "nu"])?;
    for (r, &bank) in schedule.order.iter().enumerate() {
        for l in 0..schedule.assets.len() {
            let tau = schedule.tau_tilde(r, l);
            w.write_record([
                (r + 1).to_string(),
                (bank + 1).to_string(),
                (l + 1).to_string(),
                fmt_f64(schedule.qbar[r]),
                fmt_time(tau.is_finite().then_some(tau)),
                fmt_f64(schedule.lambda_tilde(r, l)),
                fmt_f64(schedule.nu(r, l)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Bounded prices and worst-case fractions sold on a uniform grid:
/// `t, q_bound_1..q_bound_m, pi_bound_1..pi_bound_n`.
pub fn write_bounded_path(schedule: &BoundSchedule, grid: usize, path: &Path) -> Result<()> {
    let sc = schedule.scenario();
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=sc.n_assets()).map(|k| format!("q_bound_{k}")));
    header.extend((1..=sc.n_banks()).map(|i| format!("pi_bound_{i}")));
    w.write_record(&header)?;
    for j in 0..grid {
        let t = if grid < 2 { sc.horizon } else { sc.horizon * j as f64 / (grid - 1) as f64 };
        let mut row = vec![fmt_f64(t)];
        for k in 0..sc.n_assets() {
            row.push(fmt_f64(bounded_price(schedule, t, k)?));
        }
        row.extend(bounded_liquidations(schedule, t).pi.iter().map(|p| fmt_f64(*p)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `q_star, empirical_p, analytic_bound_p, dkw_lo, dkw_hi`, sorted by `q_star`.
pub fn write_cdf(rows: &[CdfRow], path: &Path) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.q_star.total_cmp(&b.q_star));
    let mut w = writer(path)?;
    w.write_record(["q_star", "empirical_p", "analytic_bound_p", "dkw_lo", "dkw_hi"])?;
    for r in &rows {
        w.write_record([r.q_star, r.empirical_p, r.analytic_bound_p, r.dkw_lo, r.dkw_hi].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table with a header row.
pub fn write_table(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}
