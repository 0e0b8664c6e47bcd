use std::path::PathBuf;

/// Errors raised by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("empty sentence")]
    EmptySentence,

    #[error("empty batch")]
    EmptyBatch,

    #[error("client {client} has an empty dataset")]
    EmptyDataset { client: u64 },

    #[error("client {client} has {sentences} sentence(s); at least 2 are required")]
    InsufficientData { client: u64, sentences: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("no client updates to aggregate")]
    NoUpdates,

    #[error("total client weight is zero")]
    ZeroWeight,

    #[error("population has {available} clients but {requested} were requested per round")]
    PopulationTooSmall { available: usize, requested: usize },

    #[error("bucket edges must be strictly increasing and contain at least two values")]
    InvalidEdges,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
