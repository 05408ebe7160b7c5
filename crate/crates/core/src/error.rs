use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variants map one-to-one onto the error kinds callers need to tell apart
/// (bad input data, numerical failure, I/O, remote service problems).
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("covariance is not positive definite (pivot {pivot} = {value:e}); use epsilon > 0 to regularize")]
    SingularCovariance { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model mismatch: expected {expected:?}, got {got:?}")]
    ModelMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncation { expected: u64, found: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },

    #[error("identity {0:?} is already enrolled")]
    DuplicateIdentity(String),

    #[error("unknown identity {0:?}")]
    UnknownIdentity(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("probe {0} has no identity label")]
    MissingLabel(usize),

    #[error("insufficient scores: {0}")]
    InsufficientScores(String),

    #[error("invalid score: {0}")]
    InvalidScore(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("detector request timed out after {timeout_ms} ms")]
    NetworkTimeout { timeout_ms: u64 },

    #[error("detector service returned HTTP {status}")]
    Service { status: u16 },

    #[error("detector protocol error: {0}")]
    Protocol(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
