use thiserror::Error;

/// Crate-wide error type. Module-local errors (`parse::ParseError`,
/// `autodiff::TensorError`) convert into this at the pipeline boundary.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Parse(#[from] crate::parse::ParseError),
    #[error(transparent)]
    Tensor(#[from] crate::autodiff::TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
