//! File formats, experiment builders and subcommand implementations for the
//! `clusterobs` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
