use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("instruction generation error: {0}")]
    Generation(String),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error("training aborted: {message}")]
    Aborted {
        message: String,
        /// Parameters after the last successful update.
        last_good: Box<crate::policy::PolicyParams>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI error document.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTrajectory(_) => "invalid_trajectory",
            Error::Pairing(_) => "pairing",
            Error::Generation(_) => "generation",
            Error::Environment(_) => "environment",
            Error::Oracle(_) => "oracle",
            Error::InvalidInput(_) => "invalid_input",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Refused(_) => "refused",
            Error::Replay(_) => "replay",
            Error::Aborted { .. } => "aborted",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
