use std::io;

use thiserror::Error;

use crate::corpus::TokenId;

pub type Result<T, E = StegoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StegoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("artifact hash mismatch for {artifact}: manifest has {expected}, found {found}")]
    ArtifactMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("desync at step {step}: received token {token}: {reason}")]
    Desync {
        step: usize,
        token: TokenId,
        reason: String,
    },

    #[error("recovered payload is inconsistent: {0}")]
    CorruptPayload(String),

    #[error("bridge error: {0}")]
    Bridge(String),
}

impl StegoError {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        StegoError::Malformed(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        StegoError::InvalidConfig(msg.into())
    }

    /// True for failures caused by sender and receiver disagreeing on the
    /// per-step distributions or the key.
    pub fn is_desync(&self) -> bool {
        matches!(self, StegoError::Desync { .. } | StegoError::CorruptPayload(_))
    }
}
