use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the deshadow library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pyramid with {levels} levels needs min(H, W) >= {needed}, got {height}x{width}")]
    PyramidTooDeep {
        levels: usize,
        needed: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint schema version `{found}` is not supported (expected `{expected}`)")]
    SchemaVersion { found: String, expected: String },

    #[error("corrupted checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("dataset `{0}` is empty")]
    DatasetEmpty(String),

    #[error("unpaired files in {split} split: {}", stems.join(", "))]
    OrphanFiles { split: String, stems: Vec<String> },

    #[error("cannot read {path}: {message}")]
    Unreadable { path: PathBuf, message: String },

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn unreadable(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Unreadable {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
