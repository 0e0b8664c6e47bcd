use std::path::PathBuf;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("artifact mismatch: {0}")]
    Mismatch(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Mismatch(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Attaches a file name to a library error.
    pub fn in_file(path: &std::path::Path, err: fedpe::Error) -> Self {
        match CliError::from(err) {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            CliError::Mismatch(msg) => CliError::Mismatch(format!("{}: {msg}", path.display())),
            io => io,
        }
    }
}

impl From<fedpe::Error> for CliError {
    fn from(err: fedpe::Error) -> Self {
        match err {
            fedpe::Error::Io { path, source } => CliError::Io { path, source },
            e @ (fedpe::Error::ShapeMismatch { .. } | fedpe::Error::Checkpoint(_)) => CliError::Mismatch(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}
