// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The ground-truth sequence has no n-grams of the requested order.
    #[error("undefined denominator: truth has {truth_len} tokens, fewer than n = {n}")]
    UndefinedDenominator { truth_len: usize, n: usize },

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("unknown sample id `{0}`")]
    UnknownSample(String),

    #[error("index {index} out of range for family of {len} models")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {count} schema violation(s), first: {first}")]
    Validation { path: PathBuf, count: usize, first: String },

    #[error("missing upstream artifact `{0}`")]
    MissingArtifact(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
