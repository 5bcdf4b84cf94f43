use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    /// One entry per offending key path.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("unknown policy `{0}` (expected one of fedfair3, random, loss_prop, oort, qffl)")]
    UnknownPolicy(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Core(#[from] fedfair_core::Error),
    #[error("{0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
