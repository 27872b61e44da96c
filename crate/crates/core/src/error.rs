use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("share undefined: the {0} arm is empty")]
    EmptyArm(&'static str),

    #[error("oracle too large: {0}")]
    OracleTooLarge(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("corrupt cache: {0}")]
    CorruptCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
