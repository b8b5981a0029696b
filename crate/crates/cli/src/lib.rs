//! Experiment harness: reads a TOML experiment, runs placement schemes over a
//! grid of cache sizes, and writes CSV tables.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod sim;

pub use compare::{compare_report, CompareError, GapRow};
pub use config::{ConfigError, ExperimentConfig, SchemeName};
pub use experiment::{run_experiment, ResultRow, ResultTable};
pub use sim::{run_simulation, SimRow};
