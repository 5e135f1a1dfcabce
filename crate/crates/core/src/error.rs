use thiserror::Error;

/// Errors surfaced by the numerical layers.
///
/// `Config` is for rejected inputs (caller mistakes), `Numeric` for aborts
/// detected mid-computation (non-finite oracle output, invariant breaches,
/// solver breakdown). The CLI maps them to distinct exit codes.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
