use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("user {user} has zero power; strip zero-power users before calling this operation")]
    ZeroPower { user: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search exhausted: {0}")]
    Exhausted(String),

    #[error("p too small: {0}")]
    PTooSmall(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
