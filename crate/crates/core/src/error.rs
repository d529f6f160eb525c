use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("risk-weighted assets are zero")]
    ZeroRiskWeightedAssets,

    #[error("no tradable assets, threshold price undefined")]
    NoTradableAssets,

    #[error("bank never activates (liabilities covered without tradable assets)")]
    NeverActivates,

    #[error("impact curve evaluated at {gamma} outside its domain (limit {limit})")]
    DomainExceeded { gamma: f64, limit: f64 },

    #[error("exogenous liquidation schedules require an exponential impact curve with b > 0")]
    NotExponentialImpact,

    #[error("near-singular regime at t={t}: lambda for asset {asset} is {lambda:e}")]
    NearSingularRegime { t: f64, asset: usize, lambda: f64 },

    #[error("regime linear system is singular at t={t}")]
    LinearSolveFailure { t: f64 },

    #[error("rank-one update is singular (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },

    #[error("capital constraint drift for bank {bank} at t={t}: residual {residual:e}")]
    ConstraintDrift { bank: usize, t: f64, residual: f64 },

    #[error("monotonicity violated at t={t}: {detail}")]
    MonotonicityViolation { t: f64, detail: String },

    #[error("lambert W argument {z} is below -1/e")]
    DomainError { z: f64 },

    #[error("lambert W argument for rank {rank}, asset {asset} falls below -1/e")]
    BranchDomainError { rank: usize, asset: usize },

    #[error("inadmissible scenario: {0}")]
    InadmissibleScenario(String),

    #[error("unsupported stress distribution: {0}")]
    UnsupportedJoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("monte carlo draw {draw} (parameters {params:?}) failed: {source}")]
    Draw {
        draw: usize,
        params: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown case study '{0}'")]
    UnknownCaseStudy(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical integration itself, as opposed
    /// to bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NearSingularRegime { .. }
            | Error::ConstraintDrift { .. }
            | Error::LinearSolveFailure { .. }
            | Error::SingularUpdate { .. }
            | Error::MonotonicityViolation { .. }
            | Error::DomainError { .. }
            | Error::BranchDomainError { .. } => true,
            Error::Draw { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {}, column {}: {}", e.line(), e.column(), e))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Io(std::io::Error::other(format!("{other:?}"))),
        }
    }
}
