#![allow(dead_code)]

use firesale::demand::{max_exponential_impact, DemandCurve, ImpactCurve, TimeDecay};
use firesale::{validate, AssetSpec, BankBook, Regulation, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws an admissible scenario with up to `max_banks` banks and `max_assets`
/// assets, exponential impact and exponential decay frozen at the horizon.
pub fn random_scenario(rng: &mut impl Rng, max_banks: usize, max_assets: usize) -> Scenario {
    loop {
        let sc = draw(rng, max_banks, max_assets);
        if validate(&sc).passed() {
            return sc;
        }
    }
}

fn draw(rng: &mut impl Rng, max_banks: usize, max_assets: usize) -> Scenario {
    let n = rng.random_range(1..=max_banks);
    let m = rng.random_range(1..=max_assets);
    let theta_min = rng.random_range(0.05..0.15);
    let reg = Regulation { theta_min };

    let mut holdings: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| if m > 1 && rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.5..3.0) })
                .collect()
        })
        .collect();
    for row in &mut holdings {
        if row.iter().all(|s| *s == 0.0) {
            row[0] = 1.0;
        }
    }

    let assets: Vec<AssetSpec> = (0..m)
        .map(|k| {
            let column: f64 = holdings.iter().map(|r| r[k]).sum();
            let market_cap = column * rng.random_range(1.0..3.0);
            let alpha = rng.random_range(0.2..0.8) / theta_min;
            let b = rng.random_range(0.0..0.9) * max_exponential_impact(alpha, market_cap, &reg);
            let rate = rng.random_range(0.02..0.4);
            AssetSpec {
                alpha,
                market_cap,
                demand: DemandCurve::new(TimeDecay::exponential(rate, 1.0), ImpactCurve::Exponential { b }),
            }
        })
        .collect();

    let banks = holdings
        .into_iter()
        .map(|s| {
            let x = rng.random_range(0.0..0.5);
            let (ell, alpha_ell) = if rng.random_bool(0.5) {
                (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))
            } else {
                (0.0, 0.0)
            };
            let value: f64 = s.iter().sum();
            let rwa: f64 = s.iter().zip(&assets).map(|(s, a)| a.alpha * s).sum::<f64>() + alpha_ell * ell;
            let theta0 = theta_min * rng.random_range(1.0..1.25);
            let p_bar = x + value + ell - theta0 * rwa;
            BankBook { x, s, ell, p_bar, alpha_ell }
        })
        .collect();

    Scenario { regulation: reg, banks, assets, horizon: 1.0 }
}

/// `count` admissible scenarios from a fixed seed.
pub fn scenario_suite(seed: u64, count: usize, max_banks: usize, max_assets: usize) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_scenario(&mut rng, max_banks, max_assets)).collect()
}

/// Total liquidations from the aggregated one-bank equation, restarted at
/// every activation.
pub fn aggregated_liquidations(sc: &Scenario, times: &[f64], step: f64) -> Vec<f64> {
    let asset = &sc.assets[0];
    let at = asset.alpha * sc.theta_min();
    let b = asset.demand.impact.exponential_rate().expect("exponential impact");
    let (rate, freeze) = match asset.demand.time {
        TimeDecay::Exponential { rate, freeze_at } => (rate, freeze_at.unwrap_or(f64::INFINITY)),
        _ => panic!("exponential decay expected"),
    };
    let ft = |t: f64| (-rate * t.min(freeze)).exp();
    let ft_prime = |t: f64| if t <= freeze { -rate * ft(t) } else { 0.0 };
    let mut banks: Vec<(f64, f64)> = sc
        .banks
        .iter()
        .map(|bk| {
            let gap = bk.p_bar - bk.x - (1.0 - bk.alpha_ell * sc.theta_min()) * bk.ell;
            (gap / ((1.0 - at) * bk.s[0]), bk.s[0])
        })
        .filter(|(qbar, _)| *qbar > 0.0)
        .collect();
    banks.sort_by(|a, b| b.0.total_cmp(&a.0));

    let deriv = |t: f64, g: f64, held: f64| -> f64 {
        let z = (1.0 - at) * (held - g) / at;
        -z * ft_prime(t) / (ft(t) * (1.0 + z * (-b)))
    };
    let rk4 = |t: f64, g: f64, held: f64, h: f64| -> f64 {
        let k1 = deriv(t, g, held);
        let k2 = deriv(t + h / 2.0, g + h / 2.0 * k1, held);
        let k3 = deriv(t + h / 2.0, g + h / 2.0 * k2, held);
        let k4 = deriv(t + h, g + h * k3, held);
        g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let price = |t: f64, g: f64| ft(t) * (-b * g).exp();

    // piecewise solution: (start, Γ* at start, units held by the active set)
    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    let (mut t, mut g, mut held, mut next) = (0.0, 0.0, 0.0, 0usize);
    let horizon = sc.horizon;
    loop {
        while next < banks.len() && price(t, g) <= banks[next].0 + 1e-12 {
            held += banks[next].1;
            next += 1;
        }
        pieces.push((t, g, held));
        if t >= horizon {
            break;
        }
        let n_steps = ((horizon - t) / step).ceil() as usize;
        let h = (horizon - t) / n_steps as f64;
        let threshold = banks.get(next).map(|bk| bk.0);
        let crossed = |tt: f64, gg: f64| threshold.is_some_and(|q| price(tt, gg) <= q);
        let mut event = None;
        for j in 0..n_steps {
            let t0 = t + j as f64 * h;
            let g0 = g;
            let g1 = if held > 0.0 { rk4(t0, g0, held, h) } else { g0 };
            if crossed(t0 + h, g1) {
                let (mut lo, mut hi) = (0.0, h);
                while hi - lo > 1e-14 {
                    let mid = 0.5 * (lo + hi);
                    let gm = if held > 0.0 { rk4(t0, g0, held, mid) } else { g0 };
                    if crossed(t0 + mid, gm) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let gh = if held > 0.0 { rk4(t0, g0, held, hi) } else { g0 };
                event = Some((t0 + hi, gh));
                break;
            }
            g = g1;
        }
        match event {
            Some((te, ge)) => {
                t = te;
                g = ge;
            }
            None => {
                t = horizon;
            }
        }
    }

    times
        .iter()
        .map(|&tq| {
            let &(t0, g0, held) = pieces.iter().rev().find(|p| p.0 <= tq).expect("piece covers t = 0");
            if held == 0.0 || tq == t0 {
                return g0;
            }
            let n_steps = ((tq - t0) / step).ceil().max(1.0) as usize;
            let h = (tq - t0) / n_steps as f64;
            (0..n_steps).fold(g0, |g, j| rk4(t0 + j as f64 * h, g, held, h))
        })
        .collect()
}
