use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented invariant.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Not enough samples or lags to carry out an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical precondition failed (non-positive MSD, singular system, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input text.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Failure inside one run of an ensemble.
    #[error("run {index}: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips `Run` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}
