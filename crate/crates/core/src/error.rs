use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("{what} id {id} out of range (size {len})")]
    Index {
        what: &'static str,
        id: usize,
        len: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown {what} '{name}'")]
    UnknownName { what: &'static str, name: String },

    #[error("triple store already has reciprocal relations")]
    AlreadyAugmented,

    #[error("triple store has not been augmented with reciprocal relations")]
    NotAugmented,

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("nothing to evaluate: query list is empty")]
    EmptySplit,

    #[error("world too large to enumerate: {triples} triples (limit {limit})")]
    WorldTooLarge { triples: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_index(what: &'static str, id: usize, len: usize) -> Result<()> {
    if id < len {
        Ok(())
    } else {
        Err(Error::Index { what, id, len })
    }
}
