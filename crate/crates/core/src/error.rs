use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value handed to an operation is outside its domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field failed validation.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    /// An operation was called in the wrong lifecycle phase.
    #[error("phase error: {0}")]
    Phase(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn for_agent(self, agent: usize) -> Self {
        Error::Agent {
            agent,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user-supplied configuration or input.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } | Error::Parse(_) => true,
            Error::Agent { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
