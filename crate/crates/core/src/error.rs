use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("address fault: {0}")]
    AddressFault(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("space exhausted: {0}")]
    SpaceExhausted(String),
    #[error("write log full: {needed} bytes requested, {free} bytes free after cleaning")]
    LogFull { needed: u64, free: u64 },
    #[error("transaction {0} is not active")]
    TxState(u32),
    #[error("transaction {0} aborted")]
    TxAborted(u32),
    #[error("lock conflict: transaction {requester} blocked by {holder}")]
    TxConflict { requester: u32, holder: u32 },
    #[error("recovery failed in section {section}: {reason}")]
    RecoveryFailed { section: u32, reason: String },
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("already exists: {0}")]
    AlreadyExists(String),
    #[error("directory not empty: {0}")]
    NotEmpty(String),
    #[error("not a directory: {0}")]
    NotADirectory(String),
    #[error("is a directory: {0}")]
    IsADirectory(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
