use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("label {label} out of range for {num_classes} classes (item `{item}`)")]
    LabelOutOfRange {
        item: String,
        label: usize,
        num_classes: usize,
    },

    #[error("worker `{worker}` labeled item `{item}` more than once")]
    DuplicateVote { item: String, worker: String },

    #[error("gold label references unknown item `{0}`")]
    UnknownGoldItem(String),

    #[error("item `{0}` has no votes")]
    NoVotes(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hidden state violates the unit constraint: {0}")]
    InvalidHiddenState(String),

    #[error("non-finite parameter after epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },

    #[error("mixture component {component} collapsed (weight {weight:e})")]
    ComponentCollapse { component: usize, weight: f64 },

    #[error("mixture weight of component {0} is zero")]
    ZeroWeight(usize),

    #[error("no prediction for gold item `{0}`")]
    MissingPrediction(String),

    #[error("L1 error is undefined for categorical labels")]
    NotOrdinal,

    #[error("could not repair empty cluster: {0}")]
    EmptyCluster(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
