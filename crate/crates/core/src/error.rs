use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: unknown kinds, non-positive sizes, bad flags.
    #[error("configuration error: {0}")]
    Config(String),
    /// A mathematical precondition was violated (zero vector, dimension mismatch).
    #[error("domain error: {0}")]
    Domain(String),
    /// A phrase mentions a word the parameter set does not know.
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    /// Malformed interchange, manifest, or checkpoint file.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    /// A caller broke an operation's contract.
    #[error("contract error: {0}")]
    Contract(String),
    /// Scene generation gave up after exhausting its attempt budget.
    #[error("generation error: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors that stem from user configuration rather than runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
