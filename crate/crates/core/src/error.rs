use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor shapes that do not line up for an operation.
    #[error("shape mismatch in {context}: {details}")]
    Shape {
        context: &'static str,
        details: String,
    },

    /// Invalid argument values (odd embedding dims, zero lengths, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dataset text that does not follow the `.ts` format.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// NaN or infinity where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Misuse of the autodiff graph (backward on non-scalars, reuse after free).
    #[error("graph error: {0}")]
    Graph(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, details: impl Into<String>) -> Self {
        Error::Shape {
            context,
            details: details.into(),
        }
    }
}
