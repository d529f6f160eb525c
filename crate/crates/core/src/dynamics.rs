//! Right-hand side of the liquidation dynamics.
//!
//! Banks on the regulatory boundary sell in proportion to their holdings so
//! that their capital ratio stays at `θ_min`. Differentiating the constraint
//! gives `Π̇ = -Z q̇` with
//!
//! ```text
//! Z_ik = 1{i active} (1 - α_k θ) s_ik (1 - Π_i) / Σ_l α_l θ s_il q_l
//! q̇    = f_t' ∘ f_Γ + diag(f_t ∘ f_Γ') sᵀ Π̇
//! ```
//!
//! which is solved either as the n×n system `(I + Z D sᵀ) Π̇ = -Z (f_t' ∘ f_Γ)`
//! or, for a single asset, by a rank-one update.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const DEFAULT_LAMBDA_FLOOR: f64 = 1e-12;
const SM_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub pi_dot: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub psi_dot: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    /// Rank-one update for a single asset, dense LU otherwise.
    Auto,
    Dense,
}

/// Per-asset curve values at one `(t, Π)`.
struct Snapshot {
    units: Vec<f64>,
    ft: Vec<f64>,
    ft_prime: Vec<f64>,
    fg: Vec<f64>,
    fg_prime: Vec<f64>,
}

impl Snapshot {
    fn new(sc: &Scenario, t: f64, pi: &[f64]) -> Result<Self> {
        let units = sc.units_sold(pi);
        let m = sc.n_assets();
        let mut snap = Snapshot {
            ft: Vec::with_capacity(m),
            ft_prime: Vec::with_capacity(m),
            fg: Vec::with_capacity(m),
            fg_prime: Vec::with_capacity(m),
            units,
        };
        for (a, g) in sc.assets.iter().zip(&snap.units) {
            snap.ft.push(a.demand.eval_ft(t));
            snap.ft_prime.push(a.demand.eval_ft_prime(t));
            snap.fg.push(a.demand.eval_fgamma(*g)?);
            snap.fg_prime.push(a.demand.eval_fgamma_prime(*g)?);
        }
        Ok(snap)
    }

    fn price(&self, k: usize) -> f64 {
        self.ft[k] * self.fg[k]
    }
}

/// Row-major n×m storage of `Z`.
struct ZMatrix {
    m: usize,
    data: Vec<f64>,
}

impl ZMatrix {
    fn at(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.m + k]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
}

fn z_matrix(sc: &Scenario, snap: &Snapshot, pi: &[f64], active: &[bool]) -> ZMatrix {
    let theta = sc.theta_min();
    let m = sc.n_assets();
    let mut data = vec![0.0; sc.n_banks() * m];
    for (i, book) in sc.banks.iter().enumerate().filter(|(i, _)| active[*i]) {
        let r: f64 = (0..m)
            .map(|k| sc.assets[k].alpha * theta * book.s[k] * snap.price(k))
            .sum();
        for k in 0..m {
            let w = (1.0 - sc.assets[k].alpha * theta) * book.s[k] * (1.0 - pi[i]);
            if w != 0.0 {
                data[i * m + k] = w / r;
            }
        }
    }
    ZMatrix { m, data }
}

/// The n×m regime matrix `Z(t, Γ)`, in fraction-of-book units: an active
/// bank sells `Π̇_i = -Σ_k Z_ik q̇_k`. Rows of inactive banks are zero.
///
/// For a single asset `s_i · Z_i` is the per-unit form
/// `(1 - αθ)(s_i - Γ_i) / (αθ f_t f_Γ)`.
pub fn compute_z(sc: &Scenario, t: f64, pi: &[f64], active: &[bool]) -> Result<Vec<Vec<f64>>> {
    let snap = Snapshot::new(sc, t, pi)?;
    let z = z_matrix(sc, &snap, pi, active);
    Ok((0..sc.n_banks()).map(|i| z.row(i).to_vec()).collect())
}

fn lambdas(sc: &Scenario, snap: &Snapshot, pi: &[f64], active: &[bool]) -> Vec<f64> {
    let theta = sc.theta_min();
    (0..sc.n_assets())
        .map(|k| {
            let at = sc.assets[k].alpha * theta;
            let remaining: f64 = sc
                .banks
                .iter()
                .zip(pi)
                .zip(active)
                .filter(|(_, &on)| on)
                .map(|((b, p), _)| b.s[k] * (1.0 - p))
                .sum();
            let slope = if snap.fg_prime[k] == 0.0 { 0.0 } else { snap.fg_prime[k] / snap.fg[k] };
            1.0 + (1.0 - at) / at * remaining * slope
        })
        .collect()
}

/// Per-asset feedback multipliers `Λ_k`. Fails with `NearSingularRegime` when
/// any falls below `floor`.
pub fn compute_lambda(
    sc: &Scenario,
    t: f64,
    pi: &[f64],
    active: &[bool],
    floor: f64,
) -> Result<Vec<f64>> {
    let snap = Snapshot::new(sc, t, pi)?;
    let lam = lambdas(sc, &snap, pi, active);
    check_floor(&lam, t, floor)?;
    Ok(lam)
}

fn check_floor(lam: &[f64], t: f64, floor: f64) -> Result<()> {
    match lam.iter().enumerate().find(|(_, &l)| !(l >= floor)) {
        Some((asset, &lambda)) => Err(Error::NearSingularRegime { t, asset, lambda }),
        None => Ok(()),
    }
}

/// `(I + scale · u vᵀ)⁻¹ b` via the rank-one update identity.
pub fn sherman_morrison_solve(u: &[f64], v: &[f64], scale: f64, b: &[f64]) -> Result<Vec<f64>> {
    let vtu: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    let denom = 1.0 + scale * vtu;
    if denom.abs() < SM_FLOOR {
        return Err(Error::SingularUpdate { denominator: denom });
    }
    let vtb: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
    let c = scale * vtb / denom;
    Ok(b.iter().zip(u).map(|(bi, ui)| bi - c * ui).collect())
}

pub fn rhs(sc: &Scenario, t: f64, pi: &[f64], active: &[bool], floor: f64) -> Result<Derivatives> {
    rhs_with(sc, t, pi, active, floor, SolvePath::Auto)
}

pub fn rhs_with(
    sc: &Scenario,
    t: f64,
    pi: &[f64],
    active: &[bool],
    floor: f64,
    path: SolvePath,
) -> Result<Derivatives> {
    let n = sc.n_banks();
    let m = sc.n_assets();
    let snap = Snapshot::new(sc, t, pi)?;
    let drift: Vec<f64> = (0..m).map(|k| snap.ft_prime[k] * snap.fg[k]).collect();

    let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let mut pi_dot = vec![0.0; n];
    if !idx.is_empty() {
        check_floor(&lambdas(sc, &snap, pi, active), t, floor)?;
        let z = z_matrix(sc, &snap, pi, active);
        let rhs_vec: Vec<f64> = idx
            .iter()
            .map(|&i| -(0..m).map(|k| z.at(i, k) * drift[k]).sum::<f64>())
            .collect();
        let solved = if m == 1 && path == SolvePath::Auto {
            let u: Vec<f64> = idx.iter().map(|&i| z.at(i, 0)).collect();
            let v: Vec<f64> = idx.iter().map(|&i| sc.banks[i].s[0]).collect();
            let scale = snap.ft[0] * snap.fg_prime[0];
            sherman_morrison_solve(&u, &v, scale, &rhs_vec)?
        } else {
            let d: Vec<f64> = (0..m).map(|k| snap.ft[k] * snap.fg_prime[k]).collect();
            let na = idx.len();
            let a = DMatrix::from_fn(na, na, |r, c| {
                let (i, j) = (idx[r], idx[c]);
                let coupling: f64 = (0..m).map(|k| z.at(i, k) * d[k] * sc.banks[j].s[k]).sum();
                if r == c {
                    1.0 + coupling
                } else {
                    coupling
                }
            });
            let b = DVector::from_vec(rhs_vec);
            let x = a.lu().solve(&b).ok_or(Error::LinearSolveFailure { t })?;
            x.iter().copied().collect()
        };
        for (&i, v) in idx.iter().zip(solved) {
            pi_dot[i] = v;
        }
    }

    let q_dot: Vec<f64> = (0..m)
        .map(|k| {
            let sold: f64 = idx.iter().map(|&j| sc.banks[j].s[k] * pi_dot[j]).sum();
            drift[k] + snap.ft[k] * snap.fg_prime[k] * sold
        })
        .collect();
    let psi_dot: Vec<f64> = (0..n)
        .map(|i| {
            if pi_dot[i] == 0.0 {
                0.0
            } else {
                pi_dot[i] * (0..m).map(|k| sc.banks[i].s[k] * snap.price(k)).sum::<f64>()
            }
        })
        .collect();
    Ok(Derivatives { pi_dot, q_dot, psi_dot })
}

/// Price drift from the m×m companion system `(I + D sᵀ Z) q̇ = f_t' ∘ f_Γ`.
pub fn companion_q_dot(sc: &Scenario, t: f64, pi: &[f64], active: &[bool]) -> Result<Vec<f64>> {
    let m = sc.n_assets();
    let snap = Snapshot::new(sc, t, pi)?;
    let z = z_matrix(sc, &snap, pi, active);
    let a = DMatrix::from_fn(m, m, |k, l| {
        let d = snap.ft[k] * snap.fg_prime[k];
        let c: f64 = sc.banks.iter().enumerate().map(|(i, b)| b.s[k] * z.at(i, l)).sum();
        if k == l {
            1.0 + d * c
        } else {
            d * c
        }
    });
    let b = DVector::from_fn(m, |k, _| snap.ft_prime[k] * snap.fg[k]);
    let x = a.lu().solve(&b).ok_or(Error::LinearSolveFailure { t })?;
    Ok(x.iter().copied().collect())
}

/// `(det(I_n + Z D sᵀ), det(I_m + D sᵀ Z))`, equal by Sylvester's identity.
pub fn regime_determinants(sc: &Scenario, t: f64, pi: &[f64], active: &[bool]) -> Result<(f64, f64)> {
    let (n, m) = (sc.n_banks(), sc.n_assets());
    let snap = Snapshot::new(sc, t, pi)?;
    let z = DMatrix::from_fn(n, m, {
        let z = z_matrix(sc, &snap, pi, active);
        move |i, k| z.at(i, k)
    });
    let d = DMatrix::from_diagonal(&DVector::from_fn(m, |k, _| snap.ft[k] * snap.fg_prime[k]));
    let s = DMatrix::from_fn(n, m, |i, k| sc.banks[i].s[k]);
    let big = DMatrix::identity(n, n) + &z * &d * s.transpose();
    let small = DMatrix::identity(m, m) + &d * s.transpose() * &z;
    Ok((big.determinant(), small.determinant()))
}
