//! Command-line pipeline and live session service.

pub mod cli;
pub mod clock;
pub mod events;
pub mod http;
pub mod session;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("action rejected: {0}")]
    Rejected(String),
    #[error("action arrived after the deadline at {deadline_ms} ms")]
    Late { deadline_ms: u64 },
    #[error("session has not finished")]
    NotFinished,
    #[error(transparent)]
    Core(#[from] redist_core::Error),
}

pub type Result<T> = std::result::Result<T, ServiceError>;
