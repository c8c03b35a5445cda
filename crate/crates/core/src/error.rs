use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The CLI maps `Config`/`Domain`/`Precondition` to exit code 2 and
/// `Numerical`/`Consistency` to exit code 3.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// Free-form diagnostics (last iterate norms, residual history, ...).
        diagnostics: Vec<String>,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn numerical(message: impl Into<String>) -> Self {
        LabError::Numerical { message: message.into(), diagnostics: Vec::new() }
    }

    pub fn numerical_with(message: impl Into<String>, diagnostics: Vec<String>) -> Self {
        LabError::Numerical { message: message.into(), diagnostics }
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, LabError::Config(_) | LabError::Domain(_) | LabError::Precondition(_) | LabError::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
