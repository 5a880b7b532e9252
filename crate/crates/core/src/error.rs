use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("label {label} at batch index {index} is out of range for {classes} classes")]
    Label { index: usize, label: usize, classes: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("cannot sample {requested} points from a cloud of {available}")]
    Count { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input has {got} points but the first stage samples {needed}")]
    InputSize { needed: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("failed to ingest {path}: {msg}")]
    Ingestion { path: PathBuf, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("optimizer state error: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this failure: 2 for input/manifest validation,
    /// 1 for everything that fails while the pipeline runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Manifest(_) | Error::Config(_) | Error::Parameter(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
