use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is not valid UTF-8 (first bad byte at offset {offset})")]
    Decode { offset: usize },

    #[error("no token reaches min_count = {min_count}; vocabulary would be empty")]
    EmptyVocabulary { min_count: u64 },

    #[error("corpus has {found} sentences but at least {needed} are required")]
    CorpusTooSmall { found: usize, needed: usize },

    #[error("no sentence is longer than {min_len} tokens, nothing to duplicate")]
    NoCandidate { min_len: usize },

    #[error("co-occurrence matrix has zero total weight")]
    EmptyMatrix,

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("post-processing produced an all-zero matrix: {0}")]
    DegeneratePostprocessing(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
