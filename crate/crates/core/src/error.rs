use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrity: {0}")]
    Integrity(String),

    #[error("surface mismatch in {review_id}: annotation has {annotated:?}, text has {sliced:?}")]
    SurfaceMismatch {
        review_id: String,
        annotated: String,
        sliced: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("duplicate review id {0:?}")]
    DuplicateId(String),

    #[error("unknown entity type tag(s): {}", .0.join(", "))]
    UnknownEntityType(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error("training: {0}")]
    Training(String),

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("provenance: {0}")]
    Provenance(String),

    #[error("plugin: {0}")]
    Plugin(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
