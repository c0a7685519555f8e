use thiserror::Error;

/// Errors raised by simulation, estimation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine (quadrature, root finding, rejection sampling) failed.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The data carries no information for the requested quantity.
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
