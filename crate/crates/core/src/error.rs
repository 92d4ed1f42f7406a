//! Error type shared by all core modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {op} got {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("filtering eliminated all data")]
    FilteredToEmpty,

    #[error("user {user} has too few interactions for a hold-out split")]
    TooFewInteractions { user: String },

    #[error("user {user} has interacted with every item; cannot sample a negative")]
    NoNegativeCandidates { user: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("node does not belong to this tape")]
    ForeignNode,

    #[error("loss must be a 1x1 scalar, got {0}x{1}")]
    NonScalarLoss(usize, usize),

    #[error("not an exchange message")]
    BadMagic,

    #[error("unsupported protocol version {got}, expected {expected}")]
    VersionMismatch { got: u16, expected: u16 },

    #[error("truncated message: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("peer disconnected mid-message")]
    PeerDisconnected,

    #[error("checkpoint format error: {0}")]
    BadCheckpoint(String),

    #[error("feature file format error: {0}")]
    BadFeatureFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
