use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Experiment specification violates the schema. Every violation is listed.
    #[error("schema violation: {}", .0.join("; "))]
    Schema(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Process exit status used by the CLI and the C interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 2,
            Error::InvalidInput(_) | Error::Precondition(_) => 3,
            Error::Io(_) | Error::Csv(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::InvalidInput(_) => "invalid_input",
            Error::Precondition(_) => "precondition",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
