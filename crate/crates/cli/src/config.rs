use std::path::{Path, PathBuf};

use onh_baselines::{AutoencoderConfig, ForestConfig};
use onh_dgcnn::DgcnnConfig;
use onh_eval::{SplitFractions, DEFAULT_FOLDS};
use onh_phantom::CohortConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{invalid, CliResult};

fn default_threshold() -> f64 {
    onh_strain::DEFAULT_THRESHOLD
}

fn default_points() -> usize {
    1024
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fractions: SplitFractions,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            fractions: SplitFractions::default(),
        }
    }
}

/// The autoencoder is pretrained once on its own unlabeled cohort, drawn
/// from the same ranges as the evaluation cohort with a separate seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeMethodConfig {
    #[serde(default)]
    pub model: AutoencoderConfig,
    pub pretrain_n: usize,
    pub pretrain_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsConfig {
    #[serde(default)]
    pub dgcnn: Option<DgcnnConfig>,
    #[serde(default)]
    pub rf: Option<ForestConfig>,
    #[serde(default)]
    pub ae: Option<AeMethodConfig>,
}

impl MethodsConfig {
    pub fn enabled(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.dgcnn.is_some() {
            out.push("dgcnn");
        }
        if self.rf.is_some() {
            out.push("rf");
        }
        if self.ae.is_some() {
            out.push("ae");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub cohort: CohortConfig,
    #[serde(default = "default_threshold")]
    pub strain_threshold: f64,
    /// Points sampled per ONH.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub cv: CvConfig,
    pub methods: MethodsConfig,
    /// Worker threads for cohort generation and folds.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

impl ExperimentConfig {
    /// Parses and validates; every error names the offending field.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(format!("config field `{path}`: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.cohort
            .validate()
            .map_err(|e| invalid(format!("config field `cohort`: {e}")))?;
        if !(self.strain_threshold.is_finite() && self.strain_threshold > 0.0) {
            return Err(invalid("config field `strain_threshold`: must be finite and > 0"));
        }
        if self.points == 0 {
            return Err(invalid("config field `points`: must be >= 1"));
        }
        if self.cv.folds < 2 {
            return Err(invalid("config field `cv.folds`: must be >= 2"));
        }
        if self.cv.folds > self.cohort.n {
            return Err(invalid("config field `cv.folds`: more folds than cohort members"));
        }
        if self.jobs == 0 {
            return Err(invalid("config field `jobs`: must be >= 1"));
        }
        let m = &self.methods;
        if m.enabled().is_empty() {
            return Err(invalid("config field `methods`: enable at least one method"));
        }
        if let Some(d) = &m.dgcnn {
            d.validate()
                .map_err(|e| invalid(format!("config field `methods.dgcnn`: {e}")))?;
            if self.points <= d.k {
                return Err(invalid("config field `points`: must exceed methods.dgcnn.k"));
            }
        }
        if let Some(rf) = &m.rf {
            if rf.n_trees == 0 || rf.max_features == Some(0) {
                return Err(invalid("config field `methods.rf`: n_trees and max_features must be >= 1"));
            }
        }
        if let Some(ae) = &m.ae {
            ae.model
                .validate()
                .map_err(|e| invalid(format!("config field `methods.ae.model`: {e}")))?;
            if ae.pretrain_n < 2 {
                return Err(invalid("config field `methods.ae.pretrain_n`: must be >= 2"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the fully resolved config (defaults filled in), leaving
    /// out the output directory and thread count, which cannot change
    /// results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.jobs = 1;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
