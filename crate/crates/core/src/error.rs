use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(&'static str),
    #[error("matrix is rank deficient: {0}")]
    RankDeficient(&'static str),
    #[error("probability {0} outside its admissible range")]
    InvalidProbability(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("set is unbounded in the requested direction")]
    Unbounded,
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("pair is not stabilizable")]
    NotStabilizable,
    #[error("pair is not detectable")]
    NotDetectable,
    #[error("matrix is not Schur stable (spectral radius {0})")]
    NotSchur(f64),
    #[error("set is empty: {0}")]
    EmptySet(String),
    #[error("sample set is degenerate: {0}")]
    DegenerateSamples(String),
    #[error("optimization problem is infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
