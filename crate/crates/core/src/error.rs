use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("protocol error: message {index} is missing field `{field}`")]
    Protocol { index: usize, field: &'static str },

    #[error("insufficient trials: pfa {pfa} needs at least {required} null trials, got {available}")]
    InsufficientTrials {
        pfa: f64,
        required: usize,
        available: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
