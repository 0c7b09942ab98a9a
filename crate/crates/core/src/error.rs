use thiserror::Error;

/// Errors surfaced by model construction, solving and instance handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    /// Schema or cross-reference violation in an instance; `section` names the
    /// offending part of the document.
    #[error("validation failed in [{section}]: {message}")]
    Validation { section: String, message: String },

    #[error("trip infeasible on path {path} for class {class}: gap of {gap_km:.3} km between {from} and {to} exceeds range {range_km:.3} km")]
    InfeasibleTrip {
        path: String,
        class: String,
        from: String,
        to: String,
        gap_km: f64,
        range_km: f64,
    },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub fn validation(section: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            section: section.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
