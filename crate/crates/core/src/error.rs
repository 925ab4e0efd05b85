//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the estimation and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix expected to be symmetric positive definite failed to factorize.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The sample does not satisfy the standing n > p requirement.
    #[error("sample must satisfy n > p (got n = {n}, p = {p})")]
    SampleTooSmall { n: usize, p: usize },

    /// Data contains NaN or infinite entries.
    #[error("data contains non-finite entries")]
    NonFinite,

    /// An observation row with zero Euclidean norm cannot be sign-normalized.
    #[error("observation row {row} has zero norm")]
    ZeroNormRow { row: usize },

    /// Matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A fixed-point iterate lost positive definiteness.
    #[error("M-estimator iterate lost positive definiteness (the existence condition on the data is likely violated)")]
    SingularIterate,

    /// Root bracketing for the scale equation failed.
    #[error("failed to bracket a root of the scale equation")]
    BracketFailure,

    /// An estimator tag could not be parsed.
    #[error("unknown estimator tag `{0}` (expected gauss, lw, huber, or t-mle)")]
    UnknownEstimator(String),

    /// A CSV input could not be parsed.
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    /// Configuration file could not be parsed.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
