use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at {path}:{line}: {reason}")]
    MalformedRecord { path: PathBuf, line: usize, reason: String },

    #[error("edge ({u}, {v}) at {path}:{line} references an unknown node")]
    DanglingEdge { path: PathBuf, line: usize, u: usize, v: usize },

    #[error("insufficient nodes: {0}")]
    InsufficientNodes(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("prompt template {template} is missing slot `{slot}`")]
    MissingSlot { template: String, slot: String },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("malformed completion: {0}")]
    MalformedCompletion(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph too dense: need {needed} non-edges, only {available} exist")]
    GraphTooDense { needed: usize, available: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("no labeled nodes available for training")]
    NoLabeledNodes,

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
