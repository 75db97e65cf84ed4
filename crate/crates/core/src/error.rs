use thiserror::Error;

use crate::finite_key::BoundedValue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Gain is zero, so an error rate conditioned on a click is undefined.
    #[error("error rate undefined: gain is zero")]
    UndefinedErrorRate,

    #[error("phase estimation unavailable: {0}")]
    EstimationUnavailable(String),

    /// The concentration bound has no positive lower end; `clamped` holds the
    /// interval with its lower end clamped to zero.
    #[error("degenerate bound for observation {observed}: lower bound clamped to 0")]
    DegenerateBound { observed: f64, clamped: BoundedValue },

    /// A zero fluctuation factor turns every bound into the point estimate.
    #[error("vacuous bound: n_alpha = {n_alpha} gives failure probability {epsilon}")]
    VacuousBound { n_alpha: f64, epsilon: f64 },

    #[error("invalid intensities: {0}")]
    InvalidIntensity(String),

    #[error("dataset {field}: {message}")]
    Dataset { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dataset(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Dataset {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
