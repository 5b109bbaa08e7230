use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
