use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: dimension mismatch (expected {expected}, found {found})")]
    RowDimension {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: duplicate item id {id}")]
    DuplicateId { row: usize, id: u32 },

    #[error("row {row}: pair {pair_id} has no {missing} counterpart")]
    DanglingPair {
        row: usize,
        pair_id: u32,
        missing: &'static str,
    },

    #[error("row {row}: non-finite value in column {column}")]
    NonFiniteRow { row: usize, column: usize },

    #[error("dimension mismatch (expected {expected}, found {found})")]
    Dimension { expected: usize, found: usize },

    #[error("unknown item id {0}")]
    UnknownItem(u32),

    #[error("item {0} has no pair counterpart")]
    MissingCounterpart(u32),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("corpus too small: need at least {needed} items, have {available}")]
    CorpusTooSmall { needed: usize, available: usize },

    #[error("invalid {field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
