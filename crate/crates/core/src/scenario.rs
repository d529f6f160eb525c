//! Scenario assembly, JSON persistence and admissibility checks.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::{
    admissible_alpha_interval, check_monotonicity_condition, max_exponential_impact, ImpactCurve,
    TimeDecay, MONOTONICITY_GRID,
};
use crate::error::{Error, Result};
use crate::model::{capital_ratio, threshold_price, AssetSpec, BankBook, Regulation};

/// Value of the top-level `schema` field in scenario files.
pub const SCENARIO_SCHEMA: &str = "firesale-scenario/1";

/// Slack allowed when checking that a bank starts at or above the threshold.
const INITIAL_RATIO_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub regulation: Regulation,
    pub banks: Vec<BankBook>,
    pub assets: Vec<AssetSpec>,
    pub horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema: String,
    #[serde(flatten)]
    scenario: Scenario,
}

impl Scenario {
    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn theta_min(&self) -> f64 {
        self.regulation.theta_min
    }

    /// Units of each asset sold system-wide, `Σ_i s_ik π_i`.
    pub fn units_sold(&self, pi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_assets()];
        for (book, p) in self.banks.iter().zip(pi) {
            for (gk, s) in g.iter_mut().zip(&book.s) {
                *gk += s * p;
            }
        }
        g
    }

    /// Prices `q_k = f_{t,k}(t) f_{Γ,k}(Σ_i s_ik π_i)`.
    pub fn prices(&self, t: f64, pi: &[f64]) -> Result<Vec<f64>> {
        self.units_sold(pi)
            .iter()
            .zip(&self.assets)
            .map(|(g, a)| a.demand.price(t, *g))
            .collect()
    }

    pub fn threshold_prices(&self) -> Vec<Option<f64>> {
        self.banks
            .iter()
            .map(|b| threshold_price(b, &self.assets, &self.regulation).ok())
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.schema != SCENARIO_SCHEMA {
            return Err(Error::Parse(format!(
                "field `schema`: expected \"{SCENARIO_SCHEMA}\", found \"{}\"",
                file.schema
            )));
        }
        Ok(file.scenario)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile { schema: SCENARIO_SCHEMA.to_string(), scenario: self.clone() };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Runs [`validate`] and converts a failing report into an error.
    pub fn ensure_admissible(&self) -> Result<()> {
        let report = validate(self);
        if report.passed() {
            Ok(())
        } else {
            Err(Error::InadmissibleScenario(report.failure_summary()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub subject: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failure_summary(&self) -> String {
        self.failures()
            .map(|c| format!("{} [{}]: {}", c.name, c.subject, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn push(&mut self, name: &'static str, subject: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(Check { name, subject: subject.into(), passed, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {:<24} {:<10} {}", c.name, c.subject, c.detail)?;
        }
        let failed = self.failures().count();
        if failed == 0 {
            write!(f, "scenario admissible ({} checks)", self.checks.len())
        } else {
            write!(f, "scenario rejected: {failed} of {} checks failed", self.checks.len())
        }
    }
}

/// Runs every admissibility check. Never short-circuits, so the report lists
/// all violations at once.
pub fn validate(sc: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    let theta = sc.regulation.theta_min;
    let m = sc.n_assets();

    r.push(
        "horizon",
        "scenario",
        sc.horizon.is_finite() && sc.horizon > 0.0,
        format!("T = {}", sc.horizon),
    );
    r.push(
        "theta_min",
        "regulation",
        theta > 0.0 && theta < 1.0,
        format!("theta_min = {theta}"),
    );
    r.push(
        "dimensions",
        "scenario",
        m > 0 && !sc.banks.is_empty(),
        format!("{} banks, {m} assets", sc.n_banks()),
    );

    let mut shapes_ok = true;
    for (i, b) in sc.banks.iter().enumerate() {
        let subject = format!("bank {i}");
        if b.s.len() != m {
            shapes_ok = false;
            r.push("holdings_length", subject, false, format!("{} holdings for {m} assets", b.s.len()));
            continue;
        }
        let fields = [b.x, b.ell, b.p_bar, b.alpha_ell]
            .into_iter()
            .chain(b.s.iter().copied());
        let nonneg = fields.clone().all(|v| v.is_finite() && v >= 0.0);
        r.push("nonnegative_book", subject, nonneg, "x, s, ell, p_bar, alpha_ell >= 0".into());
    }

    for (k, a) in sc.assets.iter().enumerate() {
        let subject = format!("asset {k}");
        let at = a.alpha * theta;
        r.push(
            "risk_weight",
            subject.clone(),
            a.alpha > 0.0 && at < 1.0,
            format!("alpha = {}, alpha*theta_min = {at}", a.alpha),
        );

        if shapes_ok {
            let held: f64 = sc.banks.iter().map(|b| b.s[k]).sum();
            r.push(
                "market_cap",
                subject.clone(),
                a.market_cap > 0.0 && a.market_cap >= held,
                format!("M = {}, system holdings = {held}", a.market_cap),
            );
        }

        let (ft0, fg0) = (a.demand.eval_ft(0.0), a.demand.eval_fgamma(0.0).unwrap_or(f64::NAN));
        r.push(
            "normalization",
            subject.clone(),
            (ft0 - 1.0).abs() <= 1e-12 && (fg0 - 1.0).abs() <= 1e-12,
            format!("f_t(0) = {ft0}, f_gamma(0) = {fg0} (initial prices must be 1)"),
        );

        let (curve_ok, curve_detail) = curve_shape(&a.demand.time, &a.demand.impact, a.market_cap);
        r.push("curve_shape", subject.clone(), curve_ok, curve_detail);

        match admissible_alpha_interval(&a.demand.impact, a.market_cap, &sc.regulation) {
            Ok(iv) => {
                let mut detail = format!(
                    "alpha = {} must lie in ({:.6}, {:.6})",
                    a.alpha, iv.lower, iv.upper
                );
                if a.demand.impact.exponential_rate().is_some() && at < 1.0 {
                    detail.push_str(&format!(
                        "; equivalently b < {:.6e}",
                        max_exponential_impact(a.alpha, a.market_cap, &sc.regulation)
                    ));
                }
                r.push("admissible_alpha", subject.clone(), iv.contains(a.alpha), detail);
            }
            Err(e) => r.push("admissible_alpha", subject.clone(), false, e.to_string()),
        }

        let mono = check_monotonicity_condition(&a.demand.impact, a.market_cap, MONOTONICITY_GRID);
        r.push(
            "impact_monotonicity",
            subject,
            mono.satisfied,
            match mono.violation_at {
                Some(g) => format!("(M - G) f'(G)/f(G) decreases near G = {g}"),
                None => "(M - G) f'(G)/f(G) nondecreasing on [0, M)".into(),
            },
        );
    }

    if shapes_ok && m > 0 {
        let ones = vec![1.0; m];
        for (i, b) in sc.banks.iter().enumerate() {
            let subject = format!("bank {i}");
            match capital_ratio(b, 0.0, &ones, 0.0, &sc.assets) {
                Ok(ratio) => r.push(
                    "initial_capital_ratio",
                    subject,
                    ratio >= theta - INITIAL_RATIO_SLACK,
                    format!("theta(0) = {ratio:.10} vs theta_min = {theta}"),
                ),
                Err(e) => r.push("initial_capital_ratio", subject, false, e.to_string()),
            }
        }
    }
    r
}

fn curve_shape(time: &TimeDecay, impact: &ImpactCurve, market_cap: f64) -> (bool, String) {
    let time_ok = match time {
        TimeDecay::Constant => true,
        TimeDecay::Exponential { rate, freeze_at } => {
            *rate >= 0.0 && rate.is_finite() && freeze_at.is_none_or(|f| f >= 0.0)
        }
        TimeDecay::Tabulated { table } => {
            let pts: Vec<(f64, f64)> = table.points().collect();
            table.first().0 == 0.0
                && pts.iter().all(|p| p.1 > 0.0 && p.1 <= 1.0)
                && pts.windows(2).all(|w| w[1].1 <= w[0].1)
        }
    };
    let impact_ok = match impact {
        ImpactCurve::None => true,
        ImpactCurve::Exponential { b } => *b >= 0.0 && b.is_finite(),
        ImpactCurve::Linear { b } => *b >= 0.0 && b * market_cap < 1.0,
        ImpactCurve::Tabulated { table } => {
            let pts: Vec<(f64, f64)> = table.points().collect();
            table.first().0 == 0.0
                && table.last().0 >= market_cap
                && pts.iter().all(|p| p.1 > 0.0)
                && pts.windows(2).all(|w| w[1].1 <= w[0].1)
        }
    };
    let detail = match (time_ok, impact_ok) {
        (true, true) => "f_t and f_gamma positive and nonincreasing".to_string(),
        (false, _) => "f_t must be positive, nonincreasing and start at t = 0".to_string(),
        (_, false) => {
            "f_gamma must be positive and nonincreasing on [0, M] (linear needs b < 1/M)".to_string()
        }
    };
    (time_ok && impact_ok, detail)
}
