use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch at node `{node}`: {detail}")]
    Shape { node: String, detail: String },
    #[error("invalid array: {0}")]
    InvalidArray(String),
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("gradients requested for non-scalar output of shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("class index {index} out of range for {classes} classes at node `{node}`")]
    ClassIndex {
        node: String,
        index: f64,
        classes: usize,
    },
    #[error("neighbor selection failed at node `{node}`: {detail}")]
    Neighbors { node: String, detail: String },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
