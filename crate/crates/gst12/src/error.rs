use thiserror::Error;

/// Error taxonomy shared by every operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: out-of-range node, self-loop, wrong group shape, …
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The instance is too large for an exact/exhaustive routine.
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    /// A bug: an internal invariant failed to hold.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn internal(msg: impl Into<String>) -> Error {
    Error::Internal(msg.into())
}
