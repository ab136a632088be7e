use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("the {0} kernel has no large-distance modified form")]
    NoModifiedForm(&'static str),

    #[error("unknown kernel family '{0}' (expected se, exp, matern32 or matern52)")]
    UnknownKernel(String),

    #[error("ill-conditioned covariance: Cholesky pivot {index} is {pivot:e} after jitter {jitter:e}")]
    IllConditioned { index: usize, pivot: f64, jitter: f64 },

    #[error("no training samples")]
    NoTrainingData,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("all {starts} optimizer starts failed to factorize the covariance; try a larger noise lower bound")]
    AllStartsFailed { starts: usize },

    #[error("empty bench: no {source_name} samples with z in [{lo}, {hi}]")]
    EmptyBench { source_name: &'static str, lo: f64, hi: f64 },

    #[error("empty comparison set")]
    EmptyComparison,

    #[error("unknown sample layout '{0}'")]
    UnknownLayout(String),

    #[error("{path}:{line}: {msg}")]
    Schema { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
