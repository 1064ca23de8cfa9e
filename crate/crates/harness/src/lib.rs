//! Command-line harness for the batting-strategy simulator: configuration,
//! bundled data, sweeps and validation reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod sweep;

pub use commands::run;
pub use config::ExperimentConfig;
pub use error::HarnessError;
