use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: user-facing input problems
/// (`Parse`, `Validation`, `Config`, `Alignment`) exit 1, runtime
/// failures (`Shape`, `Format`, `Divergence`, `Io`) exit 2.
#[derive(Debug, Error)]
pub enum OfnError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("training diverged at step {step}: {msg}")]
    Divergence { step: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OfnError>;

impl OfnError {
    pub fn validation(msg: impl Into<String>) -> Self {
        OfnError::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        OfnError::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        OfnError::Shape(msg.into())
    }
}
