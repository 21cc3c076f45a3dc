//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameters, incompatible mechanism/domain, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A value violated a hard constraint (domain containment, budget sum, ...).
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// Missing (device, time) cells or otherwise incomplete input data.
    #[error("missing data: {0}")]
    MissingData(String),

    /// A value failed to parse; addressed by file row where possible.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// An estimator or detector was called on input it cannot work with.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
