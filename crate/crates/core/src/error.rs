use thiserror::Error;

/// Errors raised by the geometric primitives and the fitting stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("x = {x} outside clothoid validity interval [{min}, {max}]")]
    OutOfRange { x: f64, min: f64, max: f64 },

    #[error("covariance rejected: {0}")]
    BadCovariance(String),

    #[error("no fit: {0}")]
    NoFit(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
