use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the detectors, calibration routines and I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("null variance estimate is not positive (Var[Z_B] = {value:e} at B = {block_size}); increase the number of moment draws")]
    NonPositiveVariance { block_size: usize, value: f64 },

    #[error("missing null moments for block size {0}")]
    MissingBlockSize(usize),

    #[error("root bracket [{lo}, {hi}] does not contain a sign change")]
    NoBracket { lo: f64, hi: f64 },

    #[error("skewness correction infeasible: 1 + 2*kappa*b = {discriminant} < 0")]
    NegativeDiscriminant { discriminant: f64 },

    #[error("reference reservoir exhausted: need {needed} fresh samples, {available} left")]
    ReservoirExhausted { needed: usize, available: usize },

    #[error("covariance matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
