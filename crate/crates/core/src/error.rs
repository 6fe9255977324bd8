use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{what} of {requested} exceeds the configured cap of {cap}")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("backward() needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite loss at iteration {iteration} (batch {batch:?}): {detail}")]
    NonFinite {
        iteration: u64,
        batch: Vec<usize>,
        detail: String,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, not a checkpoint file")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found} is not supported (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint is incompatible with the configured model: {0}")]
    Mismatch(String),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("failed to decode {path}: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("{path}: expected {expected}, found {found}")]
    Format {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("failed to encode {path}: {msg}")]
    Encode { path: PathBuf, msg: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}` ({msg})")]
    Parse { line: usize, text: String, msg: String },
    #[error("unknown config keys: {}", .0.iter().map(|(k, l)| format!("`{k}` (line {l})")).collect::<Vec<_>>().join(", "))]
    UnknownKeys(Vec<(String, usize)>),
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}
