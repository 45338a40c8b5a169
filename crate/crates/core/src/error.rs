use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset I/O, quantization, estimation and selection.
#[derive(Debug, Error)]
pub enum GioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    ParseRow {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: dimension mismatch: expected {expected}, found {found}")]
    RowDimMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite component at row {row}")]
    NonFiniteComponent { row: usize },

    #[error("row {index} is a zero vector and cannot be normalized")]
    ZeroVector { index: usize },

    #[error("{what}: need at least {needed} points, got {got}")]
    TooFewPoints {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("cluster index {index} out of range for k={k}")]
    ClusterIndexOutOfRange { index: usize, k: usize },

    #[error("no remaining candidates to select from")]
    NoRemainingCandidates,

    #[error("v became non-finite at gradient descent iteration {iteration}; lower the learning rate")]
    NonFiniteDescent { iteration: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, GioError>;
