use thiserror::Error;

#[derive(Debug, Error)]
pub enum KplaneError {
    /// An argument lies outside the domain of the operation (degree too
    /// large, zero frequency, mismatched dimensions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation exists but is not available for these parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A malformed file or document.
    #[error("format error: {0}")]
    Format(String),

    /// A numerical self-consistency check failed.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KplaneError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(KplaneError::Domain(msg.into()))
}
