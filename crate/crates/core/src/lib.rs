//! Monitoring of multivariate time-between-events (TBE) data.
//!
//! The crate provides Gumbel's bivariate exponential model
//! ([`model_gumbel`]), online control charts ([`charts`]), simulated
//! monitoring runs for vector-based and point-process data
//! ([`scenarios`]), and a Monte Carlo engine that estimates the average time
//! to signal (ATS) and calibrates control limits to a target in-control ATS
//! ([`simulation`]). [`config`] holds the file format driving the `mtbe`
//! command-line tool.

pub mod charts;
pub mod config;
pub mod model_gumbel;
pub mod quadrature;
pub mod scenarios;
pub mod simulation;
pub mod stats;

pub use charts::{Decision, Direction, MewmaConfig, PewmaConfig, ShewhartTbeConfig, VectorChartConfig};
pub use model_gumbel::{GumbelBveParams, MomentSummary, TbePair};
pub use scenarios::{RunOutcome, ShiftSpec, VectorScenario};
pub use simulation::{AtsEstimate, AtsMode, CalibrationResult, Engine, ExperimentSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model_gumbel::ModelError),
    #[error(transparent)]
    Chart(#[from] charts::ChartError),
    #[error(transparent)]
    Scenario(#[from] scenarios::ScenarioError),
    #[error(transparent)]
    Simulation(#[from] simulation::SimulationError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
}
