use thiserror::Error;

/// Errors produced anywhere in the training, sweep, and fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// A non-finite value appeared in logits, gradients, or parameters.
    #[error("numerical failure ({context}): {message}")]
    Numerical { context: String, message: String },

    /// The design matrix does not have full column rank.
    #[error("rank-deficient design matrix; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    /// Not enough usable observations for the requested fit.
    #[error("too few observations for fit: have {have}, need more than {need}")]
    TooFewObservations { have: usize, need: usize },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for errors that the CLI reports with the numerical exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
