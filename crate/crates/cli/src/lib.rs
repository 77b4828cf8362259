//! Batch runner behind the `evacsim` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod runner;

pub use commands::{cmd_compare_modes, cmd_run, cmd_sweep_window, select_window, ComparisonRow, SweepReport, SweepRow};
pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::{CliError, ErrorKind};
