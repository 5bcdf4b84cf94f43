use alloc::string::String;

use crate::client::ResourceKind;
use crate::ClientId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("index {index} out of range for dataset of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("could not reach a minimum shard size of {min_size} after {cap} Dirichlet draws")]
    ResampleCapExceeded { min_size: usize, cap: usize },

    #[error("expected {expected} items for {what}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("report from client {0} which was not selected this round")]
    UnselectedReport(ClientId),

    #[error("client {0} reported more than once")]
    DuplicateReport(ClientId),

    #[error("the run was stopped because the {0} budget is exhausted")]
    Stopped(ResourceKind),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
