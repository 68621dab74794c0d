use onh_geometry::AugmentationConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DgcnnError, Result};

pub const NUM_CLASSES: usize = 2;

/// Which columns the first EdgeConv layer uses to pick neighbors. Later
/// layers always use their full input feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstLayerMetric {
    /// x, y, z only.
    Spatial,
    /// x, y, z and thickness.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgcnnConfig {
    pub k: usize,
    pub edge_channels: Vec<usize>,
    pub aggregation_width: usize,
    /// Hidden widths followed by the class count.
    pub head_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub input_channels: usize,
    pub first_layer_metric: FirstLayerMetric,
    /// Rescale inputs by the training set's RMS (one isotropic factor for
    /// x, y, z and one for thickness) before the first layer.
    pub normalize_inputs: bool,
    /// Clouds per optimizer step; gradients are averaged over the batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    /// Drop probability on the hidden head activations during training.
    pub dropout: f64,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
}

impl Default for DgcnnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            edge_channels: vec![64, 64, 128],
            aggregation_width: 256,
            head_widths: vec![128, 64, NUM_CLASSES],
            leaky_slope: 0.2,
            input_channels: 4,
            first_layer_metric: FirstLayerMetric::Spatial,
            normalize_inputs: true,
            batch_size: 8,
            epochs: 100,
            patience: 20,
            learning_rate: 1e-3,
            dropout: 0.0,
            augmentation: AugmentationConfig::default(),
            seed: 0,
        }
    }
}

impl DgcnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DgcnnError::Config(m));
        if self.k < 1 {
            return bad("k must be >= 1".into());
        }
        if self.edge_channels.is_empty() || self.edge_channels.contains(&0) {
            return bad("edge_channels must be nonempty and positive".into());
        }
        if self.aggregation_width < 1 {
            return bad("aggregation_width must be >= 1".into());
        }
        if self.head_widths.last() != Some(&NUM_CLASSES) || self.head_widths.contains(&0) {
            return bad(format!(
                "head_widths must be positive and end in {NUM_CLASSES}"
            ));
        }
        if self.input_channels < 3 {
            return bad("input_channels must include x, y, z".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return bad("batch_size and epochs must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.augmentation.validate()?;
        Ok(())
    }

    /// Channels seen by each EdgeConv layer.
    pub(crate) fn edge_inputs(&self) -> Vec<usize> {
        let mut c = vec![self.input_channels];
        c.extend_from_slice(&self.edge_channels[..self.edge_channels.len() - 1]);
        c
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
