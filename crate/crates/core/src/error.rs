use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("entry '{word}' has more phones than letters ({phones} > {letters})")]
    TooManyPhones {
        word: String,
        phones: usize,
        letters: usize,
    },

    #[error("entry '{0}' has no valid alignment")]
    Unalignable(String),

    #[error("entry '{word}' admits more than {cap} alignments")]
    TooManyAlignments { word: String, cap: u64 },

    #[error("no alignable entries")]
    NothingAlignable,

    #[error("unknown grapheme '{letter}' in '{word}'")]
    UnknownGrapheme { word: String, letter: char },

    #[error("position {position} out of range for word of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("unsupported model version {0}")]
    ModelVersion(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate a bug rather than bad input.
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
