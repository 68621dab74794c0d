use std::path::PathBuf;

use onh_autodiff::AutodiffError;
use onh_geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("missing {tissue} {role} surface")]
    MissingSurface { tissue: &'static str, role: &'static str },
    #[error("cannot measure {0}")]
    Degenerate(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("label {0} is not a class index (0 = robust, 1 = fragile)")]
    Label(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("the {0} has not been trained")]
    Untrained(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, BaselineError>;
