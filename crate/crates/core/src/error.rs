use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpnnError>;

#[derive(Debug, Error)]
pub enum GpnnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (failed pivot {pivot}, jitter ladder exhausted)")]
    NotPositiveDefinite { pivot: usize },

    #[error("hyperparameter training failed on block {block}: {source}")]
    TrainingFailed {
        block: usize,
        #[source]
        source: Box<GpnnError>,
    },

    #[error("non-finite gradient at step {step}: {gradient:?}")]
    NonFiniteGradient { step: usize, gradient: [f64; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("singular input covariance; near-zero variance along directions {directions:?}")]
    SingularCovariance { directions: Vec<usize> },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("bad coefficient file {path}: {reason}")]
    Coefficients { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
