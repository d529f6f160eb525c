//! Randomized stress tests: analytic lower bounds on the price distribution
//! for exponential curves, and a Monte Carlo harness for the true one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use rayon::prelude::*;

use crate::bounds::{exponential_ladder, ExpLadder};
use crate::demand::TimeDecay;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::simulator::{simulate, IntegratorConfig};

/// Confidence level of the reported DKW bands.
pub const DKW_LEVEL: f64 = 0.99;

/// One-dimensional law of a stress parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// Exponential with the given rate.
    Exponential { rate: f64 },
    Degenerate { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Equally weighted atoms, kept sorted.
    Empirical { values: Vec<f64> },
}

impl Marginal {
    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("empirical marginal needs finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Marginal::Empirical { values })
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Marginal::Degenerate { value } => f64::from(u8::from(*value <= x)),
            Marginal::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Marginal::Empirical { values } => {
                values.partition_point(|v| *v <= x) as f64 / values.len() as f64
            }
        }
    }

    /// `P(X < x)`.
    pub fn cdf_strict(&self, x: f64) -> f64 {
        match self {
            Marginal::Degenerate { value } => f64::from(u8::from(*value < x)),
            Marginal::Empirical { values } => {
                values.partition_point(|v| *v < x) as f64 / values.len() as f64
            }
            _ => self.cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
            Marginal::Degenerate { value } => *value,
            Marginal::Uniform { low, high } => low + p * (high - low),
            Marginal::Empirical { values } => {
                let idx = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
                values[idx - 1]
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(match self {
            Marginal::Exponential { rate } => Exp::new(*rate)
                .map_err(|e| Error::InvalidArgument(format!("exponential rate {rate}: {e}")))?
                .sample(rng),
            Marginal::Degenerate { value } => *value,
            Marginal::Uniform { low, high } => Uniform::new_inclusive(*low, *high)
                .map_err(|e| Error::InvalidArgument(format!("uniform [{low}, {high}]: {e}")))?
                .sample(rng),
            Marginal::Empirical { values } => values[rng.random_range(0..values.len())],
        })
    }
}

/// Which quantity the stress distribution describes, per asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressTarget {
    /// The decay rate `a_l` of an exponential time factor.
    DecayRate,
    /// The time factor `f_{t,l}(t)` itself at the evaluation time.
    TimeFactor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StressDistribution {
    /// Independent marginals, one per asset.
    Independent { target: StressTarget, marginals: Vec<Marginal> },
    /// Joint law known only through equally weighted sample vectors.
    JointSamples { target: StressTarget, samples: Vec<Vec<f64>> },
}

impl StressDistribution {
    pub fn decay_rates(marginals: Vec<Marginal>) -> Self {
        StressDistribution::Independent { target: StressTarget::DecayRate, marginals }
    }

    pub fn time_factors(marginals: Vec<Marginal>) -> Self {
        StressDistribution::Independent { target: StressTarget::TimeFactor, marginals }
    }

    pub fn target(&self) -> StressTarget {
        match self {
            StressDistribution::Independent { target, .. } | StressDistribution::JointSamples { target, .. } => *target,
        }
    }

    fn check(&self, n_assets: usize) -> Result<()> {
        match self {
            StressDistribution::Independent { marginals, .. } if marginals.len() != n_assets => {
                Err(Error::InvalidArgument(format!(
                    "{} marginals given for {n_assets} assets",
                    marginals.len()
                )))
            }
            StressDistribution::JointSamples { samples, .. } => {
                if samples.is_empty() {
                    Err(Error::UnsupportedJoint("joint law has no samples".into()))
                } else if samples.iter().any(|s| s.len() != n_assets) {
                    Err(Error::UnsupportedJoint("joint samples do not match the asset count".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            StressDistribution::Independent { marginals, .. } => marginals.iter().map(|m| m.sample(rng)).collect(),
            StressDistribution::JointSamples { samples, .. } => Ok(samples[rng.random_range(0..samples.len())].clone()),
        }
    }

    /// Probability that every coordinate lands in its event. `marginal_prob`
    /// gives the per-asset probability under independence, `hit` decides a
    /// single sampled coordinate.
    fn joint_prob(
        &self,
        marginal_prob: impl Fn(usize, &Marginal) -> f64,
        hit: impl Fn(usize, f64) -> bool,
    ) -> f64 {
        match self {
            StressDistribution::Independent { marginals, .. } => {
                marginals.iter().enumerate().map(|(l, m)| marginal_prob(l, m)).product()
            }
            StressDistribution::JointSamples { samples, .. } => {
                let count = samples.iter().filter(|s| s.iter().enumerate().all(|(l, v)| hit(l, *v))).count();
                count as f64 / samples.len() as f64
            }
        }
    }
}

/// Exponential rate `μ` for which an exponentially distributed decay rate
/// pushes `exp(-a)` to or below `level` with probability `tail`.
pub fn calibrated_rate(level: f64, tail: f64) -> f64 {
    tail.ln() / level.ln()
}

/// Analytic price-distribution bounds built from the exponential ladders of
/// every asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityBound {
    pub ladders: Vec<ExpLadder>,
}

impl ProbabilityBound {
    pub fn new(sc: &Scenario) -> Result<Self> {
        sc.ensure_admissible()?;
        let ladders = (0..sc.n_assets()).map(|l| exponential_ladder(sc, l)).collect::<Result<_>>()?;
        Ok(Self { ladders })
    }

    /// `Φ_k⁻¹(x)`, with `k` the number of activated ranks (0 means none).
    pub fn phi_inverse(&self, asset: usize, k: usize, x: f64) -> Result<f64> {
        if k == 0 {
            return Ok(-x);
        }
        let ladder = &self.ladders[asset];
        let r = k - 1;
        let w = ladder.w_term(r, x - ladder.log_y[r], k, asset)?;
        Ok(w / ladder.gamma(r) - x)
    }

    /// Number of ranks whose threshold price lies strictly above `q_star`.
    pub fn segment(&self, asset: usize, q_star: f64) -> usize {
        self.ladders[asset].qbar.partition_point(|&q| q > q_star)
    }

    /// Argument `ln q* + b Σ_{i ≤ k} s_i` fed to `Φ⁻¹`.
    fn shifted_log(&self, asset: usize, q_star: f64) -> (usize, f64) {
        let ladder = &self.ladders[asset];
        let k = self.segment(asset, q_star);
        let cum = if k == 0 { 0.0 } else { ladder.cum_s[k - 1] };
        (k, q_star.ln() + ladder.b * cum)
    }

    /// Smallest unimpacted price level `f_t(t)` that still guarantees
    /// `q(t) ≥ q_star` for `asset`.
    pub fn time_factor_threshold(&self, asset: usize, q_star: f64) -> Result<f64> {
        let (k, x) = self.shifted_log(asset, q_star);
        Ok((-self.phi_inverse(asset, k, x)?).exp())
    }

    /// Largest decay rate that still guarantees `q(t) ≥ q_star`.
    pub fn decay_threshold(&self, asset: usize, q_star: f64, t: f64) -> Result<f64> {
        let (k, x) = self.shifted_log(asset, q_star);
        let phi = self.phi_inverse(asset, k, x)?;
        Ok(if t > 0.0 {
            phi / t
        } else if phi >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        })
    }

    /// Lower bound on `P(q_l(t) ≥ q*_l for all l)` for random decay rates.
    pub fn price_cdf_lower_bound(&self, t: f64, q_star: &[f64], dist: &StressDistribution) -> Result<f64> {
        dist.check(self.ladders.len())?;
        let thresholds = (0..self.ladders.len())
            .map(|l| match dist.target() {
                StressTarget::DecayRate => self.decay_threshold(l, q_star[l], t),
                StressTarget::TimeFactor => self.time_factor_threshold(l, q_star[l]),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(match dist.target() {
            StressTarget::DecayRate => dist.joint_prob(|l, m| m.cdf(thresholds[l]), |l, v| v <= thresholds[l]),
            StressTarget::TimeFactor => {
                dist.joint_prob(|l, m| 1.0 - m.cdf_strict(thresholds[l]), |l, v| v >= thresholds[l])
            }
        })
    }

    /// Lower bound on `P(q(t) ≥ q*)` for a random time factor `f_t(t)`.
    pub fn random_ft_bound(&self, q_star: &[f64], dist: &StressDistribution) -> Result<f64> {
        if dist.target() != StressTarget::TimeFactor {
            return Err(Error::InvalidArgument("random_ft_bound needs a time-factor distribution".into()));
        }
        self.price_cdf_lower_bound(f64::NAN, q_star, dist)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Sampled stress parameters per draw.
    pub params: Vec<Vec<f64>>,
    /// Prices at the evaluation time per draw.
    pub prices: Vec<Vec<f64>>,
    /// Per asset, the sampled prices in increasing order.
    pub sorted: Vec<Vec<f64>>,
}

impl MonteCarloResult {
    pub fn n_samples(&self) -> usize {
        self.prices.len()
    }

    /// Empirical `P(q_asset ≤ q_star)`.
    pub fn empirical_cdf(&self, asset: usize, q_star: f64) -> f64 {
        let v = &self.sorted[asset];
        v.partition_point(|q| *q <= q_star) as f64 / v.len() as f64
    }

    /// Empirical `P(q_l ≥ q*_l for all l)`.
    pub fn prob_at_least(&self, q_star: &[f64]) -> f64 {
        let hits = self.prices.iter().filter(|p| p.iter().zip(q_star).all(|(q, s)| q >= s)).count();
        hits as f64 / self.n_samples() as f64
    }

    /// Dvoretzky–Kiefer–Wolfowitz band half-width at confidence `level`.
    pub fn dkw_radius(&self, level: f64) -> f64 {
        ((2.0 / (1.0 - level)).ln() / (2.0 * self.n_samples() as f64)).sqrt()
    }
}

/// Scenario for one draw: exponential time factors with the drawn rates,
/// integrated up to `t`.
fn stressed_scenario(sc: &Scenario, target: StressTarget, params: &[f64], t: f64) -> Scenario {
    let mut out = sc.clone();
    for (asset, p) in out.assets.iter_mut().zip(params) {
        let rate = match target {
            StressTarget::DecayRate => *p,
            StressTarget::TimeFactor => -p.ln() / t,
        };
        asset.demand.time = TimeDecay::exponential(rate, sc.horizon);
    }
    out.horizon = t;
    out
}

/// Samples the stress parameters, simulates each draw up to `t` and collects
/// the prices. Draw `d` uses stream `d` of a generator seeded with `seed`, so
/// results do not depend on scheduling.
pub fn monte_carlo(
    sc: &Scenario,
    dist: &StressDistribution,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("monte carlo needs at least one sample".into()));
    }
    if !(t > 0.0 && t <= sc.horizon) {
        return Err(Error::InvalidArgument(format!("evaluation time {t} outside (0, {}]", sc.horizon)));
    }
    dist.check(sc.n_assets())?;
    let mut cfg = IntegratorConfig::for_horizon(t);
    cfg.output_grid = 2;
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let params = dist.sample(&mut rng)?;
            let stressed = stressed_scenario(sc, dist.target(), &params, t);
            match simulate(&stressed, &cfg) {
                Ok(traj) => Ok((params, traj.terminal.q)),
                Err(e) => Err(Error::Draw { draw: d, params, source: Box::new(e) }),
            }
        })
        .collect::<Result<_>>()?;
    let (params, prices): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let sorted = (0..sc.n_assets())
        .map(|l| {
            let mut v: Vec<f64> = prices.iter().map(|p: &Vec<f64>| p[l]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    Ok(MonteCarloResult { params, prices, sorted })
}

/// One row of the distribution comparison for a single-asset scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfRow {
    pub q_star: f64,
    /// Empirical `P(q ≤ q*)`.
    pub empirical_p: f64,
    /// Upper bound on `P(q < q*)` implied by the analytic lower bound on
    /// `P(q ≥ q*)`.
    pub analytic_bound_p: f64,
    pub dkw_lo: f64,
    pub dkw_hi: f64,
}

/// Compares the empirical and analytic distributions of the first asset's
/// price on `grid` (sorted ascending in the output).
pub fn cdf_table(
    mc: &MonteCarloResult,
    bound: &ProbabilityBound,
    dist: &StressDistribution,
    t: f64,
    grid: &[f64],
) -> Result<Vec<CdfRow>> {
    let eps = mc.dkw_radius(DKW_LEVEL);
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&q| {
            let p = mc.empirical_cdf(0, q);
            let lower = bound.price_cdf_lower_bound(t, &[q], dist)?;
            Ok(CdfRow {
                q_star: q,
                empirical_p: p,
                analytic_bound_p: 1.0 - lower,
                dkw_lo: (p - eps).max(0.0),
                dkw_hi: (p + eps).min(1.0),
            })
        })
        .collect()
}
