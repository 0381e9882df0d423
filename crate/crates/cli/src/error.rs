use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical guard: {0}")]
    Numerical(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Library errors raised while ingesting a config are config errors.
    pub fn config_from(e: switchreach::Error) -> Self {
        match e {
            switchreach::Error::Numerical(m) => CliError::Numerical(m),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<switchreach::Error> for CliError {
    fn from(e: switchreach::Error) -> Self {
        match e {
            switchreach::Error::Numerical(m) => CliError::Numerical(m),
            switchreach::Error::Io(e) => CliError::Io(e),
            switchreach::Error::Config(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
