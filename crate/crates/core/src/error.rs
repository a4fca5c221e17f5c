use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function (e.g. a Gamma pole).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to reach its accuracy target.
    /// `partial` carries the best value obtained, when one exists.
    #[error("numerical error: {message}")]
    Numerical { message: String, partial: Option<f64> },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// Caller broke a documented precondition (mismatched grids, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical { message: message.into(), partial: None }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Parse(_) | Error::Unsupported(_) | Error::Contract(_) | Error::Io(_)
        )
    }
}
