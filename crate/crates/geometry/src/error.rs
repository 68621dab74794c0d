use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate point set: {0}")]
    Degenerate(String),
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("k = {k} needs at least {} points, got {n}", k + 1)]
    TooFewPoints { k: usize, n: usize },
    #[error("query index {index} out of range for {n} points")]
    QueryIndex { index: usize, n: usize },
    #[error("invalid augmentation config: {0}")]
    Augmentation(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
