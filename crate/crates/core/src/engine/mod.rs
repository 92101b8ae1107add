//! Scenario configuration, the discrete-event loop, and canned experiments.

pub mod config;
pub mod scenarios;
pub mod scheduler;
pub mod world;

use thiserror::Error;

use crate::control_plane::ControlError;
use crate::iot::IotError;
use crate::ledger::LedgerError;
use crate::metrics::{MetricsError, MetricsReport};

pub use config::{ConfigError, Mode, Preset, ScenarioConfig, SCHEMA_VERSION};
pub use scheduler::Scheduler;
pub use world::{Simulation, World};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("control plane: {0}")]
    Control(#[from] ControlError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("iot: {0}")]
    Iot(#[from] IotError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Builds and runs one scenario, returning only its report.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport, EngineError> {
    Ok(World::build(config.clone())?.run()?.report)
}
