use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The CLI maps these onto distinct exit codes: configuration problems,
/// IO/format problems, and numeric failures are kept apart so scripts can
/// react to each.
#[derive(Debug, Error)]
pub enum UrnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl UrnError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        UrnError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, UrnError>;
