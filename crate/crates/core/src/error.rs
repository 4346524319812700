use thiserror::Error;

/// Errors raised by the pricing, estimation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric evaluation would overflow or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A statistical estimation could not be carried out.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Malformed input data, with the 1-based line where it was detected.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
