use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient: smallest singular value {smallest:e} <= {tol:e} * largest {largest:e}")]
    RankDeficient {
        smallest: f64,
        largest: f64,
        tol: f64,
    },

    #[error("sketched matrix is rank deficient: smallest singular value {smallest:e}, largest {largest:e}")]
    RankDeficientSketch { smallest: f64, largest: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("residual is zero, signal-to-noise ratio is infinite")]
    ZeroResidual,

    #[error("invalid sampling weights: {0}")]
    InvalidWeights(String),

    #[error("sketch size m = {m} too small for d = {d}: need m > {}", .d + .extra)]
    InvalidSketchSize { m: usize, d: usize, extra: usize },

    #[error("noise vector in the null space of A^T vanished after resampling")]
    DegenerateNoise,

    #[error("covariance matrix is not symmetric positive definite")]
    NotSpd,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("{path}: line {line}: label {label} outside [0, {classes})")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: String,
        classes: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the numerical content of the data rather
    /// than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::RankDeficientSketch { .. }
                | Error::ZeroResidual
                | Error::DegenerateNoise
                | Error::NotSpd
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
