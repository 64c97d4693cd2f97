use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A convex pmf was required but a second difference is negative.
    #[error("pmf is not convex: second difference at {position} is {value:e}")]
    ShapeViolation { position: usize, value: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    /// Every observation is 0, so the test statistic is trivially zero.
    #[error("degenerate support: all observations equal 0")]
    DegenerateSupport,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
