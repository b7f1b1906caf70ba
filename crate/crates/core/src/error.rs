use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest missing: {0}")]
    ManifestMissing(PathBuf),

    #[error("{file}: {message}")]
    Format { file: PathBuf, message: String },

    #[error("{file}: field `{field}`: {message}")]
    Field {
        file: PathBuf,
        field: String,
        message: String,
    },

    #[error("invalid recording {subject}: {violations}")]
    InvalidRecording { subject: String, violations: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("missing channel: {0}")]
    MissingChannel(String),

    #[error("ICA did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("missing rating for {0}")]
    MissingRating(String),

    #[error("task impossible: {0}")]
    TaskImpossible(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::ManifestMissing(_)
            | Error::Format { .. }
            | Error::Field { .. }
            | Error::InvalidRecording { .. }
            | Error::InvalidArgument(_)
            | Error::MissingChannel(_)
            | Error::MissingRating(_)
            | Error::TaskImpossible(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Toml(_) => true,
            Error::Context { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
