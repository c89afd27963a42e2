//! Config-driven experiment harness.
//!
//! A run loads one flat dotted-key config file, assembles the space, maps
//! and schedule, certifies the fixed-point fixture, generates the trace,
//! executes every applicable audit and rate certification, and writes a
//! CSV of residuals plus a JSON summary.
//!
//! Exit-code contract, surfaced by the CLI: 0 when every mathematical
//! check passes, 1 when at least one check fails (witnesses land in the
//! summary), 2 for configuration, fixture, or IO problems.

mod config;
mod csv;
mod run;

use thiserror::Error;

pub use config::{load_config, parse_config, ExperimentConfig, RateOverride, SchemeKind};
pub use csv::emit_csv;
pub use run::{run_experiment, RunOutcome, RunSummary};

/// Environment variable naming the default output directory for runs whose
/// configs do not set explicit output paths.
pub const OUTPUT_DIR_VAR: &str = "ASYMREG_OUT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> HarnessError {
        HarnessError::Config { key: key.to_string(), message: message.into() }
    }
}
