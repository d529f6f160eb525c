//! Fire-sale contagion under risk-weighted capital constraints: exact
//! simulation of the liquidation dynamics, analytical stress-test bounds and
//! randomized stress tests.

pub mod bounds;
pub mod cases;
pub mod demand;
pub mod dynamics;
pub mod error;
pub mod lambert;
pub mod model;
pub mod output;
pub mod scenario;
pub mod simulator;
pub mod stochastic;
pub mod study;

pub use error::{Error, Result};
pub use model::{AssetSpec, BankBook, Regulation, SystemState, Trajectory};
pub use scenario::{validate, Scenario, ValidationReport};
pub use simulator::{simulate, IntegratorConfig};
