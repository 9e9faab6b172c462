use thiserror::Error;

#[derive(Debug, Error)]
pub enum PepError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("inconsistent instance: {0}")]
    Inconsistent(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PepError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PepError::InvalidInput(msg.into()))
}
