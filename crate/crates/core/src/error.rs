use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum WmError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("episode is already terminal")]
    InvalidEpisodeState,
    #[error("oracle could not solve task {0}")]
    OracleFailure(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    VocabMismatch { id: usize, vocab_size: usize },
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("numerical error: {0}")]
    NumericalError(String),
    #[error("format error: {0}")]
    FormatError(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("group of size {0} is too small (need at least 2)")]
    GroupTooSmall(usize),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("config error at `{path}`: {message}")]
    ConfigError { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WmError>;

impl WmError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        WmError::ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}
