use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the grasp pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("hand model error: {0}")]
    Model(String),

    #[error("numerical failure in {term}: {detail}")]
    Numerical { term: String, detail: String },

    #[error("object placement infeasible after {attempts} attempts")]
    PlacementInfeasible { attempts: usize },

    #[error("palm alignment undefined: palm axis is vertical")]
    AlignmentUndefined,

    #[error("{path}:{line}: malformed record: {detail}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            term: term.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
