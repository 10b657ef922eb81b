//! Scenario orchestration: data streams, outlier injection, the simulator,
//! metrics and configuration.

pub mod config;
pub mod data;
pub mod metrics;
pub mod outliers;
pub mod sim;

pub use config::ScenarioConfig;
pub use metrics::{npll, rmse, wasserstein2_gaussians, MetricsRecord};
pub use sim::{run_scenario, RunOutput, Simulation};
