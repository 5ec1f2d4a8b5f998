//! Training state on disk: a one-line magic header followed by JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::{Agent, LagrangianState, Method, Optimizers, TrainerRngs};

pub const MAGIC: &str = "cofc-checkpoint/1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (missing {MAGIC:?} header)")]
    Magic,
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint networks have hidden layers {found:?}, configuration asks for {expected:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: Method,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub agent: Agent,
    pub optimizers: Optimizers,
    pub lagrangian: LagrangianState,
    pub rngs: TrainerRngs,
    /// Free-form provenance (configuration digest, version).
    #[serde(default)]
    pub provenance: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(
        method: Method,
        seed: u64,
        epoch: usize,
        agent: Agent,
        optimizers: Optimizers,
        lagrangian: LagrangianState,
        rngs: TrainerRngs,
    ) -> Self {
        Self {
            method,
            seed,
            epoch,
            agent,
            optimizers,
            lagrangian,
            rngs,
            provenance: Vec::new(),
        }
    }

    pub fn to_text(&self) -> Result<String, CheckpointError> {
        Ok(format!("{MAGIC}\n{}\n", serde_json::to_string(self)?))
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let body = text.strip_prefix(MAGIC).ok_or(CheckpointError::Magic)?;
        let body = body.strip_prefix('\n').ok_or(CheckpointError::Magic)?;
        Ok(serde_json::from_str(body)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Reject a checkpoint whose networks do not match the expected widths.
    pub fn check_hidden(&self, expected: &[usize]) -> Result<(), CheckpointError> {
        let found = self.agent.hidden();
        if found != expected {
            return Err(CheckpointError::Shape {
                expected: expected.to_vec(),
                found,
            });
        }
        Ok(())
    }
}
