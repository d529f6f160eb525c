//! Principal branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;
const MAX_ITER: usize = 50;

/// `W₀(z)`, the solution `w ≥ -1` of `w e^w = z`, for `z ≥ -1/e`.
pub fn lambert_w(z: f64) -> Result<f64> {
    if z.is_nan() || z < BRANCH_POINT - 1e-15 {
        return Err(Error::DomainError { z });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let p2 = 2.0 * (E * z + 1.0);
    if p2 <= 0.0 {
        return Ok(-1.0);
    }
    let mut w = initial_guess(z, p2);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(z: f64, p2: f64) -> f64 {
    if z < -0.25 {
        // series about the branch point
        let p = p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < E {
        let l = (1.0 + z).ln();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `W₀(e^u)` without forming `e^u`, for arguments that would overflow or
/// underflow.
pub fn lambert_w_exp(u: f64) -> Result<f64> {
    if u.is_nan() {
        return Err(Error::DomainError { z: f64::NAN });
    }
    if u < 500.0 {
        return lambert_w(u.exp());
    }
    // w + ln w = u
    let mut w = u - u.ln();
    for _ in 0..MAX_ITER {
        let f = w + w.ln() - u;
        let step = f / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Newton on w e^w = z from a safe start, used as a reference.
    fn newton_oracle(z: f64) -> f64 {
        let mut w = if z > 1.0 { z.ln() } else { 0.0 };
        for _ in 0..200 {
            let ew = w.exp();
            let next = w - (w * ew - z) / (ew * (w + 1.0));
            if (next - w).abs() < 1e-16 {
                return next;
            }
            w = next;
        }
        w
    }

    #[test]
    fn special_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(-1.0 / E).unwrap() + 1.0).abs() < 1e-12);
        assert!((lambert_w(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((newton_oracle(1.0) - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w(E).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(lambert_w(-0.5), Err(Error::DomainError { .. })));
    }

    #[test]
    fn agrees_with_newton_reference() {
        for &z in &[-0.3, -0.1, 1e-10, 0.5, 2.0, 10.0, 1e3, 1e6] {
            let w = lambert_w(z).unwrap();
            assert!((w - newton_oracle(z)).abs() < 1e-13 * (1.0 + w.abs()), "z={z}");
        }
    }

    #[test]
    fn exp_argument_variant() {
        for &u in &[-30.0, -1.0, 0.0, 3.0, 100.0, 499.0] {
            let a = lambert_w_exp(u).unwrap();
            let b = lambert_w(u.exp()).unwrap();
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()), "u={u}");
        }
        for &u in &[501.0, 1e4, 1e9] {
            let w = lambert_w_exp(u).unwrap();
            assert!((w + w.ln() - u).abs() < 1e-12 * u);
        }
    }

    #[test]
    fn residual_on_log_grid() {
        let mut worst: f64 = 0.0;
        for j in 0..2000 {
            let z = 10f64.powf(-12.0 + 20.0 * j as f64 / 1999.0);
            for z in [z, -z.min(1.0 / E - 1e-12)] {
                let w = lambert_w(z).unwrap();
                worst = worst.max((w * w.exp() - z).abs() / z.abs().max(1.0));
            }
        }
        assert!(worst <= 1e-13, "worst residual {worst:e}");
    }
}
