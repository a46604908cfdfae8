use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{what} id {id} out of bounds (count {count})")]
    Bounds {
        what: &'static str,
        id: u64,
        count: usize,
    },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("tape was recorded against parameter version {tape}, params are at {params}")]
    StaleTape { tape: u64, params: u64 },

    #[error("training diverged in {stage} at step {step}: {detail}")]
    Divergence {
        stage: &'static str,
        step: usize,
        detail: String,
    },

    #[error("bundle {0} has no items")]
    EmptyBundle(usize),

    #[error("stage {required} checkpoint is missing (expected at {path})")]
    MissingStage { required: String, path: PathBuf },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by I/O rather than by a violated contract.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
