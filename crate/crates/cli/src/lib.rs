//! Command-line harness for randevo experiments: configuration loading,
//! orchestration of simulations and checks, and result files.
//!
//! Exit codes: 0 success, 2 schema error, 3 model error, 4 runtime error,
//! 5 failed checks, 6 Monte Carlo budget too small.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{simulate, sweep, validate, verify, Outcome, Report, Status};
pub use config::{load, ExperimentConfig, Overrides, Suite};
pub use error::CliError;
pub use manifest::{RunManifest, MANIFEST_FILE};
