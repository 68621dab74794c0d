use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::sample::choose_indices;
use crate::{OnhPointCloud, Point};

/// Training-time perturbations. Enabled transforms run in the order
/// crop, subsample, rotate, translate, noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub crop: bool,
    /// Side of the crop box as a fraction of the cloud's x and y extent.
    pub crop_fraction: f64,
    pub subsample: bool,
    pub subsample_count: usize,
    pub rotate: bool,
    /// Rotation about the BMO-plane normal, uniform in `[-deg, deg]`.
    pub rotation_deg: f64,
    pub translate: bool,
    /// Per-axis translation, uniform in `[-mm, mm]`.
    pub translation_mm: f64,
    pub noise: bool,
    pub noise_sigma_mm: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            crop: false,
            crop_fraction: 1.0,
            subsample: false,
            subsample_count: 1,
            rotate: false,
            rotation_deg: 0.0,
            translate: false,
            translation_mm: 0.0,
            noise: false,
            noise_sigma_mm: 0.0,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(GeometryError::Augmentation(format!(
                "crop_fraction {} outside (0, 1]",
                self.crop_fraction
            )));
        }
        if self.subsample_count < 1 {
            return Err(GeometryError::Augmentation("subsample_count must be >= 1".into()));
        }
        if !(self.noise_sigma_mm >= 0.0) {
            return Err(GeometryError::Augmentation("noise_sigma_mm must be >= 0".into()));
        }
        if !(self.rotation_deg >= 0.0 && self.translation_mm >= 0.0) {
            return Err(GeometryError::Augmentation("ranges must be >= 0".into()));
        }
        Ok(())
    }

    /// Same config, different random stream.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

pub fn augment(cloud: &OnhPointCloud, cfg: &AugmentationConfig) -> Result<OnhPointCloud> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(GeometryError::Empty("point cloud".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = cloud.clone();

    if cfg.crop && cfg.crop_fraction < 1.0 {
        let mut lo = out.positions[0];
        let mut hi = out.positions[0];
        for p in &out.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let mut box_lo = [0.0; 2];
        let mut box_hi = [0.0; 2];
        for a in 0..2 {
            let side = cfg.crop_fraction * (hi[a] - lo[a]);
            let start = lo[a] + rng.random::<f64>() * (hi[a] - lo[a] - side);
            box_lo[a] = start;
            box_hi[a] = start + side;
        }
        let keep: Vec<usize> = (0..out.len())
            .filter(|&i| {
                let p = &out.positions[i];
                (0..2).all(|a| p[a] >= box_lo[a] && p[a] <= box_hi[a])
            })
            .collect();
        // an empty crop would leave nothing to learn from; keep the cloud
        if !keep.is_empty() {
            out = out.select(&keep);
        }
    }

    if cfg.subsample {
        let keep = choose_indices(out.len(), cfg.subsample_count, rng.random());
        out = out.select(&keep);
    }

    if cfg.rotate && cfg.rotation_deg > 0.0 {
        let max = cfg.rotation_deg.to_radians();
        let angle = rng.random_range(-max..=max);
        let rot = Rotation3::from_axis_angle(&Point::z_axis(), angle);
        for p in &mut out.positions {
            *p = rot * *p;
        }
    }

    if cfg.translate && cfg.translation_mm > 0.0 {
        let t = cfg.translation_mm;
        let shift = Point::new(
            rng.random_range(-t..=t),
            rng.random_range(-t..=t),
            rng.random_range(-t..=t),
        );
        for p in &mut out.positions {
            *p += shift;
        }
    }

    if cfg.noise && cfg.noise_sigma_mm > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma_mm).expect("sigma validated");
        for p in &mut out.positions {
            for a in 0..3 {
                p[a] += normal.sample(&mut rng);
            }
        }
    }
    Ok(out)
}
