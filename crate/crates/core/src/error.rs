use thiserror::Error;

/// Errors raised by the numerical engine and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("convergence error after {iterations} iterations (residual {residual:.3e}): {context}")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// A shrinkage function could not be evaluated where it was needed.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Other numerical failures (non-finite values, failed factorizations).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the CLI: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
