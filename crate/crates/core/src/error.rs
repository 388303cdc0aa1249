use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The point configuration is not generic (duplicate positions or marks,
    /// tied distances, a point at the origin for the radial spanning tree).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A numerical quantity is undefined or non-finite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A replicate exceeded the configured resource cap.
    #[error("capacity exceeded: {points} points drawn, cap is {cap}")]
    Capacity { points: usize, cap: usize },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("integration did not converge: value {value}, error estimate {abs_error}")]
    Integration { value: f64, abs_error: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
