use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration: unknown constraint ids, missing budgets,
    /// negative learning rates, inconsistent dimensions, and the like.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric quantity that must stay finite became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed or unsupported checkpoint payload.
    #[error("checkpoint error at byte {offset}: {message}")]
    Checkpoint { offset: usize, message: String },

    /// Environment fault (misconfigured arena, exhausted placement retries, ...).
    #[error("environment error: {0}")]
    Env(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn env(msg: impl Into<String>) -> Self {
        CoreError::Env(msg.into())
    }
}
