use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid parameter `{field}`: {detail}")]
    InvalidParams { field: String, detail: String },
    #[error("geometrically impossible phantom: {0}")]
    Impossible(String),
    #[error("malformed volume data: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] onh_geometry::GeometryError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad sidecar {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, PhantomError>;

pub(crate) fn invalid(field: &str, detail: impl Into<String>) -> PhantomError {
    PhantomError::InvalidParams {
        field: field.to_string(),
        detail: detail.into(),
    }
}
