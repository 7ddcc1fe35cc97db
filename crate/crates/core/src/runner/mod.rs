//! End-to-end runs: cohort simulation, training, scenarios and reports.

pub mod artifacts;
pub mod closed_loop;
pub mod cohort;
pub mod commands;
pub mod config;
pub mod report;
pub mod rig;
pub mod suite;

pub use closed_loop::{run_closed_loop, LoopInput, LoopLogs, ScenarioOutcome};
pub use commands::DeviceMode;
pub use config::RunConfig;
pub use report::MetricsReport;
pub use rig::DeviceRig;
pub use suite::{run_suite, InteractionSuite, LatencyStats, SuiteReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Analytics(#[from] crate::analytics::AnalyticsError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Devices(#[from] crate::devices::DeviceError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
