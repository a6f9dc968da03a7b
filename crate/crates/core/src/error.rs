use alloc::string::String;

/// Errors raised by the tensor kernels, manifolds and solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shifted tridiagonal system is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("Cholesky factorization failed: matrix is not symmetric positive definite")]
    CholeskyFailed,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("core matricization in mode {mode} is rank deficient (condition {cond:e})")]
    RankDeficientCore { mode: usize, cond: f64 },

    #[error("rank collapse during truncation in mode {mode}")]
    RankCollapse { mode: usize },

    #[error("tangent vectors belong to different base points")]
    BasePointMismatch,

    #[error("nonpositive curvature <xi, A xi> = {0:e}")]
    NonpositiveCurvature(f64),

    #[error("intermediate rank {rank} exceeds the cap {cap}")]
    RankOverflow { rank: usize, cap: usize },

    #[error("dense materialization of {entries} entries exceeds the safety bound {bound}")]
    DenseTooLarge { entries: usize, bound: usize },

    #[error("PCG breakdown: <p, Hp> = {0:e}")]
    PcgBreakdown(f64),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
