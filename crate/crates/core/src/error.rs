use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (dimension mismatch, bad hyperparameter, unknown key).
    #[error("configuration error: {0}")]
    Config(String),
    /// A scenario could not be generated under the configured bounds.
    #[error("generation error: {0}")]
    Generation(String),
    /// A function was called outside its documented domain.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Stored data disagrees with the object it is supposed to describe.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A NaN or infinity showed up where a finite number is required.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Malformed input files.
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
