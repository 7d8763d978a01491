use cclab::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or inconsistent spec, or bad flags.
    #[error("{0}")]
    Usage(String),
    /// Requests beyond the enumeration or explicit-matrix caps.
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Core(CoreError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnsupportedSize(m) => CliError::Refused(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit status: 2 for usage problems and refusals, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Refused(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}
