use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dataset exists: {} is not empty", .0.display())]
    DatasetExists(PathBuf),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (this build reads major version {supported})")]
    Version { found: String, supported: u64 },

    #[error("integrity error in {table}.{field}: {detail}")]
    Integrity {
        table: String,
        field: String,
        detail: String,
    },

    #[error("row range {start}+{count} out of bounds for {len} rows")]
    Bounds { start: u64, count: u64, len: u64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("name error: {0}")]
    Name(String),

    #[error("permission error: {0}")]
    Permission(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("reference error: {0}")]
    Reference(String),

    #[error("key error: {0}")]
    Key(String),

    #[error("import error: {0}")]
    Import(String),

    #[error("CSV parse error at byte {byte}: {message}")]
    Parse { byte: u64, message: String },

    #[error("conversion error: {0}")]
    Conversion(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn integrity(table: &str, field: &str, detail: impl Into<String>) -> Self {
        Error::Integrity {
            table: table.to_owned(),
            field: field.to_owned(),
            detail: detail.into(),
        }
    }
}
