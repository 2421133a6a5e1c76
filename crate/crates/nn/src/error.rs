use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("sequence of length {len} exceeds capacity {max}")]
    Capacity { len: usize, max: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
