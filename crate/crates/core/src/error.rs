use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands disagree on video, frame count or class count.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A scalar argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. `line` is 1-based when known.
    #[error("{}: {}{}", path.display(), line.map(|l| format!("line {l}: ")).unwrap_or_default(), message)]
    Format {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
