use thiserror::Error;

/// Error type shared across the crate. Numeric kernels (matmul, tape ops)
/// treat shape mismatches as programming errors and panic with messages that
/// name the offending shapes; everything driven by user input or external
/// state funnels through this enum.
#[derive(Debug, Error)]
pub enum RoltError {
    #[error("config error: {0}")]
    Config(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RoltError>;
