//! Experiment harness around `qtnn-core`: config parsing, training runs
//! that emit per-epoch CSV metrics and checkpoints, and diagnostic tables.

pub mod config;
pub mod error;
pub mod experiment;
pub mod tools;

pub use config::{parse_config, parse_config_with, ExperimentConfig, ModelChoice};
pub use error::{CliError, CliResult};
pub use experiment::{run_comparison, run_experiment, RunOptions, RunSummary};
