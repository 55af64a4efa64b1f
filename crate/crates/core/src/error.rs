//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the corpus pipeline, the autodiff engine, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or usage (bad knob values, missing params).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or unusable input data.
    #[error("data error: {0}")]
    Data(String),

    /// Tensor shape mismatch or invalid shape request.
    #[error("shape error: {0}")]
    Shape(String),

    /// Numeric failure (non-finite loss or gradient, degenerate reduction).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
