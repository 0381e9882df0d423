use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown history {0:?}")]
    UnknownHistory(Vec<usize>),
    #[error("numerical guard: {0}")]
    Numerical(String),
    #[error("quadrature unavailable: {0}")]
    QuadratureUnavailable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for aborts raised by numerical guards (escape, singular solves).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
