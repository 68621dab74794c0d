use onh_autodiff::AutodiffError;
use onh_geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DgcnnError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("point cloud is not in the canonical BMO frame")]
    NotCanonical,
    #[error("k = {k} needs more than {k} points, got {n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("features have {got} channels, expected {expected}")]
    Channels { got: usize, expected: usize },
    #[error("label {0} is not a class index (0 = robust, 1 = fragile)")]
    Label(usize),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("weights do not match the config: {0}")]
    Weights(String),
    #[error("model metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, DgcnnError>;
