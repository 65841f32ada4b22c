//! Experiment orchestration for the sketch toolkit.
//!
//! The binary front-end in `main.rs` is a thin argument layer; every
//! pipeline lives here so integration tests can drive it in-process:
//!
//! * [`config`] — the validated TOML manifest all subcommands share.
//! * [`pipeline`] — trace construction and the per-(estimator, budget)
//!   experiment cells.
//! * [`experiment`] — the full sweep: every estimator at every budget,
//!   with per-cell failure isolation.
//! * [`report`] — append-safe, schema-versioned CSV and JSON emission.
//! * [`ripbench`] — restricted-isometry distances for the dense
//!   ensembles and both sketch operators.
//! * [`ablate`] — loss-term ablation variants over the recovery model.
//! * [`robustness`] — degradation under temporal, spatial, and natural
//!   workload shift.
//! * [`commands`] — the remaining single-purpose subcommands
//!   (generate / summarize / refine / train / recover).

pub mod ablate;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod pipeline;
pub mod report;
pub mod ripbench;
pub mod robustness;

use std::fmt;

/// Failure class of a command, mapped onto process exit codes: bad
/// configuration exits 1, a failure while running exits 2.
#[derive(Debug)]
pub enum CliError {
    /// The manifest or arguments are unusable; nothing was attempted.
    Config(String),
    /// The run failed partway; reports written so far remain on disk.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<flore_core::Error> for CliError {
    fn from(err: flore_core::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
