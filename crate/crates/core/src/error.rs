use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A direction was required from a vector with zero norm. Usually means a
    /// degenerate encoding upstream (e.g. an all-padding input at init).
    #[error("zero-norm vector where a direction is required")]
    ZeroVector,

    #[error("max pooling over an empty feature map")]
    EmptyMap,

    #[error("sequence of length {len} is shorter than window size {window}")]
    SequenceTooShort { len: usize, window: usize },

    #[error("malformed embedding file at line {line}: {reason}")]
    MalformedEmbeddingFile { line: usize, reason: String },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate article id {0:?}")]
    DuplicateId(String),

    #[error("article {0:?} has no publication timestamp")]
    MissingTimestamp(String),

    #[error("too few examples: have {have}, need at least {need}")]
    TooFewExamples { have: usize, need: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),

    #[error("vocabulary mismatch: stored hash {stored}, computed {computed}")]
    VocabularyMismatch { stored: String, computed: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
