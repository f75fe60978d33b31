use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent sizes or parameters supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),
    /// A parameter outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to deliver a trustworthy result.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

impl Error {
    /// Prefix the message, keeping the kind.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        }
    }
}
