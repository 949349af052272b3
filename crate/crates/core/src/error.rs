use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdrError>;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdrError {
    #[error("degenerate response range: min {min} is not below max {max}")]
    DegenerateRange { min: f64, max: f64 },

    #[error("need at least 2 slices, got {0}")]
    InvalidSliceCount(usize),

    #[error("slice grid is not strictly ascending at position {0}")]
    InvalidGrid(usize),

    #[error("response {value} outside slice range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("covariance matrix is numerically singular (min eigenvalue {min_eigenvalue}, max {max_eigenvalue})")]
    SingularCovariance { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("eigensolver did not converge after {0} iterations")]
    ConvergenceFailure(usize),

    #[error("input is not standardized (max |mean| {mean_err:e}, ||cov - I||_F {cov_err:e})")]
    NotStandardized { mean_err: f64, cov_err: f64 },

    #[error("matrix does not have full column rank")]
    RankDeficient,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid number of directions {k} for dimension {p}")]
    InvalidDirectionCount { k: usize, p: usize },

    #[error("model {model} needs at least {needed} predictors, got {p}")]
    InsufficientDimension { model: u8, needed: usize, p: usize },

    #[error("unknown model id {0} (expected 1..=8)")]
    UnknownModel(u8),

    #[error("shard is empty")]
    EmptyShard,

    #[error("need at least {needed} samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("need at least 2 repetitions for a standard deviation, got {0}")]
    InsufficientRepetitions(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("metric value {0} outside [0, 1] beyond tolerance")]
    MetricOutOfRange(f64),
}
