use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("class {class} has {count} samples but {parts} parts were requested")]
    ClassTooSmall {
        class: usize,
        count: usize,
        parts: usize,
    },

    #[error("bootstrap samples kept missing class(es) after {retries} redraws")]
    BootstrapExhausted { retries: usize },

    #[error("need at least {needed} reference rows, found {available}")]
    TooFewReferences { needed: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no meta-training sample has consensus below the threshold {h_c}")]
    EmptySelection { h_c: f64 },

    #[error("meta-training data contains only meta-class {present}")]
    SingleMetaClass { present: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
