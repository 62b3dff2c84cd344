use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("expected {expected} values, got {actual}")]
    Size { expected: usize, actual: usize },

    #[error("sequence of length {len} is shorter than window width {width}")]
    SequenceTooShort { len: usize, width: usize },

    #[error("every position is ignored, loss is undefined")]
    EmptyLoss,

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("non-finite loss at step {step}; offending parameters: {params:?}")]
    NonFiniteLoss { step: usize, params: Vec<String> },

    #[error("{what} length {len} exceeds limit {max}")]
    Length { what: &'static str, len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocab { id: usize, size: usize },

    #[error("invalid pinyin reading {reading:?}: {reason}")]
    Reading { reading: String, reason: &'static str },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("checkpoint tensor {tensor:?}: {msg}")]
    Checkpoint { tensor: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("missing parameter {0:?}")]
    MissingParam(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    /// True for failures caused by bad numbers rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NonFiniteLoss { .. })
    }
}
