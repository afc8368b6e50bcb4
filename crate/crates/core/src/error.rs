//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (bad value, bad shape spec,
    /// infeasible configuration).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The requested operation is not defined for this domain
    /// (e.g. uniform sampling over the nonnegative orthant).
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    /// A numerical operation failed (non-SPD matrix, overflow, NaN,
    /// line-search collapse). The message carries diagnostics.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// File or serialization problem in the I/O helpers.
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
