//! Batch runner behind the `cofc` binary: configuration, run orchestration
//! and artifact files.

pub mod config;
mod run;

pub use config::RunConfig;
pub use run::{
    cmd_evaluate, cmd_train, cmd_verify, run_dir, EvaluateOutcome, Manifest, RunRecord, TrainOutcome, VerifyOutcome,
};

use std::path::PathBuf;

pub const VERSION: &str = concat!("cofc ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output directory {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Checkpoint(#[from] cofc::checkpoint::CheckpointError),
    #[error(transparent)]
    Train(#[from] cofc::train::TrainError),
    #[error(transparent)]
    Tabular(#[from] cofc::tabular::TabularError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    /// Divergence and verification failures are reported through outcomes,
    /// not errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Train(cofc::train::TrainError::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 1;
