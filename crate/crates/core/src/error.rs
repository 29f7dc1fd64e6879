//! Error type shared by all modules.

/// Crate-wide error enum.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Unregularized solve requested on a system with no usable singular values.
    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    /// Eigenvector matrix too ill-conditioned for the decoupled path; the
    /// coupled solver handles these systems.
    #[error("eigenbasis condition number {cond:.3e} exceeds {limit:.3e}; use the coupled path")]
    IllConditionedEigenbasis { cond: f64, limit: f64 },

    #[error("step failed at t = {t}: {detail}")]
    StepFailure { t: f64, detail: String },

    #[error("degenerate feature vector: {0}")]
    DegenerateFeatures(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Too few usable data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
