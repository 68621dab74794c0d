use serde::{Deserialize, Serialize};

use crate::anatomy::Anatomy;
use crate::error::{invalid, Result};
use crate::grid::VolumeGrid;

/// Layer thicknesses away from the canal, in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerThickness {
    pub rnfl_mm: f64,
    pub gcl_ipl_mm: f64,
    pub orl_mm: f64,
    pub rpe_mm: f64,
    pub choroid_mm: f64,
    pub sclera_mm: f64,
    pub lc_mm: f64,
}

impl Default for LayerThickness {
    fn default() -> Self {
        Self {
            rnfl_mm: 0.11,
            gcl_ipl_mm: 0.08,
            orl_mm: 0.12,
            rpe_mm: 0.03,
            choroid_mm: 0.20,
            sclera_mm: 0.38,
            lc_mm: 0.20,
        }
    }
}

/// Placement of the anatomy inside the scan: a small tilt (rotation about
/// the scan x axis, then y), a lateral offset of the canal axis, and the
/// depth of the BMO centre below the top of the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPose {
    pub tilt_x_deg: f64,
    pub tilt_y_deg: f64,
    pub offset_x_mm: f64,
    pub offset_y_mm: f64,
    pub bmo_depth_mm: f64,
}

impl Default for ScanPose {
    fn default() -> Self {
        Self {
            tilt_x_deg: 0.0,
            tilt_y_deg: 0.0,
            offset_x_mm: 0.0,
            offset_y_mm: 0.0,
            bmo_depth_mm: 0.7,
        }
    }
}

/// Geometry of one synthetic optic nerve head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomParams {
    pub bmo_radius_mm: f64,
    /// Depth of the Gaussian cup in the inner limiting membrane at the axis.
    pub cup_depth_mm: f64,
    /// Depth of the anterior LC below the BMO plane at the axis.
    pub lc_depth_mm: f64,
    pub lc_curvature_radius_mm: f64,
    pub thickness: LayerThickness,
    /// Opening angle of the scleral canal wall; positive widens posteriorly.
    pub canal_wall_angle_deg: f64,
    /// Latent fragility in [0, 1]; scales the load response only.
    pub fragility: f64,
    pub pose: ScanPose,
    pub grid: VolumeGrid,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            bmo_radius_mm: 0.85,
            cup_depth_mm: 0.35,
            lc_depth_mm: 0.45,
            lc_curvature_radius_mm: 3.0,
            thickness: LayerThickness::default(),
            canal_wall_angle_deg: 5.0,
            fragility: 0.5,
            pose: ScanPose::default(),
            grid: VolumeGrid::full(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be a positive length")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is not finite")))
    }
}

impl PhantomParams {
    /// Field-level checks. Geometric consistency is checked when the
    /// anatomy is built.
    pub fn validate(&self) -> Result<()> {
        positive("bmo_radius_mm", self.bmo_radius_mm)?;
        positive("cup_depth_mm", self.cup_depth_mm)?;
        positive("lc_depth_mm", self.lc_depth_mm)?;
        positive("lc_curvature_radius_mm", self.lc_curvature_radius_mm)?;
        let t = &self.thickness;
        positive("thickness.rnfl_mm", t.rnfl_mm)?;
        positive("thickness.gcl_ipl_mm", t.gcl_ipl_mm)?;
        positive("thickness.orl_mm", t.orl_mm)?;
        positive("thickness.rpe_mm", t.rpe_mm)?;
        positive("thickness.choroid_mm", t.choroid_mm)?;
        positive("thickness.sclera_mm", t.sclera_mm)?;
        positive("thickness.lc_mm", t.lc_mm)?;
        finite("canal_wall_angle_deg", self.canal_wall_angle_deg)?;
        if self.canal_wall_angle_deg.abs() >= 45.0 {
            return Err(invalid("canal_wall_angle_deg", "must lie in (-45, 45)"));
        }
        if !(0.0..=1.0).contains(&self.fragility) {
            return Err(invalid("fragility", format!("{} is outside [0, 1]", self.fragility)));
        }
        let p = &self.pose;
        finite("pose.tilt_x_deg", p.tilt_x_deg)?;
        finite("pose.tilt_y_deg", p.tilt_y_deg)?;
        finite("pose.offset_x_mm", p.offset_x_mm)?;
        finite("pose.offset_y_mm", p.offset_y_mm)?;
        positive("pose.bmo_depth_mm", p.bmo_depth_mm)?;
        if p.tilt_x_deg.abs() > 30.0 || p.tilt_y_deg.abs() > 30.0 {
            return Err(invalid("pose", "tilt beyond 30 degrees"));
        }
        self.grid.validate()
    }

    /// Quantities the structural-parameter extractor should recover.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let a = Anatomy::new(self, Default::default())?;
        Ok(GroundTruth {
            bmo_radius_mm: self.bmo_radius_mm,
            bmo_area_mm2: std::f64::consts::PI * self.bmo_radius_mm * self.bmo_radius_mm,
            prelamina_depth_mm: -a.ilm(0.0, 0.0),
            lc_depth_mm: self.lc_depth_mm,
            lc_curvature_radius_mm: self.lc_curvature_radius_mm,
        })
    }
}

/// Generator-known values, in the anatomical (BMO-centred) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bmo_radius_mm: f64,
    pub bmo_area_mm2: f64,
    /// Signed depth of the inner limiting membrane below the BMO centre.
    pub prelamina_depth_mm: f64,
    /// Depth of the anterior LC below the BMO centre.
    pub lc_depth_mm: f64,
    pub lc_curvature_radius_mm: f64,
}

/// Closed interval for a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Standard deviation of the uniform distribution on the range.
    pub fn std(&self) -> f64 {
        (self.max - self.min) / 12f64.sqrt()
    }

    fn check(&self, field: &str) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min <= self.max {
            Ok(())
        } else {
            Err(invalid(field, format!("range [{}, {}] is empty or not finite", self.min, self.max)))
        }
    }
}

/// Uniform sampling ranges for cohort generation. Declared, not clinically
/// derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub bmo_radius_mm: Range,
    pub cup_depth_mm: Range,
    pub lc_depth_mm: Range,
    pub lc_curvature_radius_mm: Range,
    pub canal_wall_angle_deg: Range,
    pub rnfl_mm: Range,
    pub gcl_ipl_mm: Range,
    pub orl_mm: Range,
    pub rpe_mm: Range,
    pub choroid_mm: Range,
    pub sclera_mm: Range,
    pub lc_thickness_mm: Range,
    pub tilt_deg: Range,
    pub offset_mm: Range,
    pub bmo_depth_mm: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            bmo_radius_mm: Range::new(0.70, 0.95),
            cup_depth_mm: Range::new(0.20, 0.45),
            lc_depth_mm: Range::new(0.35, 0.55),
            lc_curvature_radius_mm: Range::new(2.5, 4.0),
            canal_wall_angle_deg: Range::new(0.0, 10.0),
            rnfl_mm: Range::new(0.08, 0.14),
            gcl_ipl_mm: Range::new(0.06, 0.10),
            orl_mm: Range::new(0.10, 0.15),
            rpe_mm: Range::new(0.025, 0.035),
            choroid_mm: Range::new(0.15, 0.25),
            sclera_mm: Range::new(0.30, 0.45),
            lc_thickness_mm: Range::new(0.15, 0.25),
            tilt_deg: Range::new(-3.0, 3.0),
            offset_mm: Range::new(-0.15, 0.15),
            bmo_depth_mm: Range::new(0.65, 0.75),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        self.bmo_radius_mm.check("ranges.bmo_radius_mm")?;
        self.cup_depth_mm.check("ranges.cup_depth_mm")?;
        self.lc_depth_mm.check("ranges.lc_depth_mm")?;
        self.lc_curvature_radius_mm.check("ranges.lc_curvature_radius_mm")?;
        self.canal_wall_angle_deg.check("ranges.canal_wall_angle_deg")?;
        self.rnfl_mm.check("ranges.rnfl_mm")?;
        self.gcl_ipl_mm.check("ranges.gcl_ipl_mm")?;
        self.orl_mm.check("ranges.orl_mm")?;
        self.rpe_mm.check("ranges.rpe_mm")?;
        self.choroid_mm.check("ranges.choroid_mm")?;
        self.sclera_mm.check("ranges.sclera_mm")?;
        self.lc_thickness_mm.check("ranges.lc_thickness_mm")?;
        self.tilt_deg.check("ranges.tilt_deg")?;
        self.offset_mm.check("ranges.offset_mm")?;
        self.bmo_depth_mm.check("ranges.bmo_depth_mm")
    }
}

/// Load model and geometry-to-fragility coupling.
///
/// The load is a posterior bowing `u_z = -A·exp(-ρ²/2w²)` about the canal
/// axis with `w = width_factor·r_BMO` and
/// `A = amplitude_max_mm·f·r_BMO/reference_radius_mm`, faded to zero between
/// `taper_start_mm` and `taper_end_mm` from the axis. The latent fragility is
/// `f = logistic(logistic_slope·(s - s_q))` with
/// `s = z(r_BMO) + z(lc_depth) + N(0, score_noise²)`, where `z` standardises
/// against the sampling range and `s_q` is the cohort quantile that meets
/// the requested class balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub amplitude_max_mm: f64,
    pub reference_radius_mm: f64,
    pub width_factor: f64,
    pub taper_start_mm: f64,
    pub taper_end_mm: f64,
    pub translation_max_mm: f64,
    pub score_noise: f64,
    pub logistic_slope: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            amplitude_max_mm: AMPLITUDE_MAX_MM,
            reference_radius_mm: 0.85,
            width_factor: 0.6,
            taper_start_mm: 1.10,
            taper_end_mm: 1.38,
            translation_max_mm: 0.02,
            score_noise: 0.25,
            logistic_slope: 3.0,
        }
    }
}

/// Bowing amplitude at f = 1 that puts the mean effective LC strain of the
/// default geometry at 0.08 on the desk grid (twice the labelling threshold).
pub const AMPLITUDE_MAX_MM: f64 = 0.1358;

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_max_mm.is_finite() && self.amplitude_max_mm >= 0.0) {
            return Err(invalid("coupling.amplitude_max_mm", "must be finite and >= 0"));
        }
        positive("coupling.reference_radius_mm", self.reference_radius_mm)?;
        positive("coupling.width_factor", self.width_factor)?;
        positive("coupling.taper_start_mm", self.taper_start_mm)?;
        if !(self.taper_end_mm > self.taper_start_mm) {
            return Err(invalid("coupling.taper_end_mm", "must exceed taper_start_mm"));
        }
        if !(self.translation_max_mm.is_finite() && self.translation_max_mm >= 0.0) {
            return Err(invalid("coupling.translation_max_mm", "must be finite and >= 0"));
        }
        if !(self.score_noise.is_finite() && self.score_noise >= 0.0) {
            return Err(invalid("coupling.score_noise", "must be finite and >= 0"));
        }
        positive("coupling.logistic_slope", self.logistic_slope)
    }

    pub fn amplitude_mm(&self, params: &PhantomParams) -> f64 {
        self.amplitude_max_mm * params.fragility * params.bmo_radius_mm / self.reference_radius_mm
    }
}
