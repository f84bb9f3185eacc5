//! Serving errors and the transient/permanent split that drives retry.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServeError {
    #[error("request timed out after {seconds}s")]
    Timeout { seconds: f64 },
    #[error("connection failed: {detail}")]
    Connection { detail: String },
    #[error("queue full")]
    QueueFull,
    #[error("unauthorized")]
    Unauthorized,
    #[error("backend failed: {detail}")]
    Backend { detail: String },
    #[error("internal error: {detail}")]
    Internal { detail: String },
}

impl ServeError {
    /// Transient errors are worth retrying with backoff; the rest are not.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Timeout { .. } | Self::Connection { .. } | Self::QueueFull)
    }

    /// HTTP status this error maps to at the API boundary.
    pub fn status_code(&self) -> u16 {
        match self {
            Self::Timeout { .. } => 504,
            Self::Connection { .. } => 502,
            Self::QueueFull => 429,
            Self::Unauthorized => 401,
            Self::Backend { .. } => 502,
            Self::Internal { .. } => 500,
        }
    }
}
