//! Scenario runner behind the `fedgae` binary.

pub mod config;
pub mod scenario;

pub use config::{parse_config, snapshot, ConfigError, RunConfig, KEYS};
pub use scenario::{run_scenario, run_sweep, simulate, ScenarioError, ScenarioResult, Summary, SweepAxis};
