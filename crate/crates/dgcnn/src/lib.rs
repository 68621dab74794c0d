//! Dynamic graph CNN over ONH point clouds.
//!
//! A stack of EdgeConv layers (k-NN graphs rebuilt in each layer's input
//! feature space), a shared per-point layer to the aggregation width, a global
//! channelwise max pool and a small head producing robust/fragile logits.
//! The argmax points of the global pool are the cloud's critical points.

mod config;
mod density;
mod error;
mod model;
mod train;

pub use config::{DgcnnConfig, FirstLayerMetric, NUM_CLASSES};
pub use density::{
    annulus_mass_fraction, critical_density_map, pool_critical_points, PooledCriticalPoints,
    DENSITY_RADIUS_MM,
};
pub use error::{DgcnnError, Result};
pub use model::{
    edgeconv_forward, forward, forward_features, loss_and_gradients, CriticalPointSet, DgcnnModel,
    EdgeConvWeights, InputScale, Prediction, TrainingManifest,
};
pub use train::{evaluate_loss, train, EpochRecord, LabeledCloud, TrainOutcome};
