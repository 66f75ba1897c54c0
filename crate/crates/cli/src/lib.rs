//! Command-line front end: pool files, run configuration and reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod pool_file;
pub mod report;

pub use error::{CliError, CliResult};
