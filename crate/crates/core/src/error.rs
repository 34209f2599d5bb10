use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown POS tag `{0}`")]
    UnknownPos(String),

    #[error("duplicate POS tag `{0}` in tagset")]
    DuplicatePos(String),

    #[error("tagset is empty")]
    EmptyTagSet,

    #[error("empty word at position {0}")]
    EmptyWord(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sequence too long: at most {required} positions allowed, got {actual}")]
    SequenceTooLong { required: usize, actual: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("span list does not tile [0, {len}): {reason}")]
    NonTiling { len: usize, reason: String },

    #[error("loss weights sum to zero")]
    ZeroWeight,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("knowledge corpus is empty")]
    EmptyCorpus,

    #[error("incompatible models: {0}")]
    Incompatible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Incompatible(_) | Error::Config(_) | Error::Format(_) => 3,
            _ => 2,
        }
    }
}
