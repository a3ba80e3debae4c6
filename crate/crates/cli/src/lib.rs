//! Experiment runner for spatial random permutations: configuration,
//! subcommands, CSV output and checkpoints.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod validate;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
