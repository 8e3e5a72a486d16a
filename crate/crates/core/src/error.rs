use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus contains no tokens")]
    EmptyCorpus,

    #[error("line contains no tokens")]
    EmptyLine,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    InvalidToken { id: usize, vocab_size: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("span ({i}, {j}) out of range for sentence of length {n}")]
    SpanOutOfRange { i: usize, j: usize, n: usize },

    #[error("outside scores have not been computed for this chart")]
    OutsideNotComputed,

    #[error("tree enumeration requested for n = {n}, above the cap of {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("baseline contrastive entropy is zero")]
    ZeroBaseline,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model was built for vocabulary hash {expected}, got {got}")]
    VocabMismatch { expected: String, got: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("sentence {index}: {source}")]
    AtSentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn at_sentence(self, index: usize) -> Self {
        Error::AtSentence {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures that come from the arithmetic rather than from input or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::ZeroBaseline => true,
            Error::AtSentence { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
