//! Energy-minimal offloading of sensor-processing tasks from battery devices
//! to a shared edge server under a common delay budget.
//!
//! [`optimizer::solve`] computes the optimal shares in closed form,
//! [`oracle`] certifies them by brute force, and [`metrics`] runs the delay
//! and bandwidth sweeps. Scenarios are generated from a seeded
//! [`config::ScenarioConfig`] or read from the line-oriented file format.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod units;

pub use config::{parse_config, ConfigError, PlacementSample, ScenarioConfig};
pub use model::{CloudServer, ModelError, Scenario, UserDevice, UserId};
pub use optimizer::{
    kkt_residuals, solve, KktReport, KktTolerances, LoadStatus, OffloadSolution, SolveError,
    SolverOptions,
};
pub use scenario::{generate, parse_scenario, serialize_scenario, ScenarioError};
