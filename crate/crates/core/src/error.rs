use alloc::string::String;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("operator has non-finite entries")]
    InvalidOperator,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("state has zero norm")]
    DegenerateState,
    #[error("cosine-sum kernels are already discrete lines; use the mode list directly")]
    UseModeListDirectly,
    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time grids do not match")]
    GridMismatch,
    #[error("dimension {dim} exceeds the configured cap {cap}")]
    TooLarge { dim: usize, cap: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
