use onh_geometry::{BoundaryRole, Matrix3, Point, Tissue};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PhantomError, Result};
use crate::params::PhantomParams;

/// Peak extra nerve-fibre thickness at the rim and its radial width.
const RIM_BULGE_MM: f64 = 0.10;
const RIM_BULGE_WIDTH_MM: f64 = 0.25;
/// Cup width relative to the BMO radius.
const CUP_WIDTH_FACTOR: f64 = 0.45;
/// Minimum clearance between stacked surfaces the generator accepts.
const MIN_CLEARANCE_MM: f64 = 0.02;

/// Seeded angular modulation of the inner retinal layers (a `cos 2θ`
/// pattern that fades to zero at the canal axis).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Perturbation {
    pub rnfl_amplitude: f64,
    pub rnfl_phase: f64,
    pub gcl_amplitude: f64,
    pub gcl_phase: f64,
}

impl Perturbation {
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            rnfl_amplitude: rng.random_range(0.05..0.25),
            rnfl_phase: rng.random_range(0.0..std::f64::consts::PI),
            gcl_amplitude: rng.random_range(0.0..0.15),
            gcl_phase: rng.random_range(0.0..std::f64::consts::PI),
        }
    }
}

/// Analytic anatomy in the BMO-centred frame (BMO centre at the origin,
/// BMO plane `z = 0`, `+z` anterior) plus its placement in the scan.
#[derive(Debug, Clone)]
pub(crate) struct Anatomy {
    pub r: f64,
    cup: f64,
    cup_sigma: f64,
    lc_depth: f64,
    lc_rc: f64,
    t_rnfl: f64,
    t_gcl: f64,
    pub t_lc: f64,
    tan_wall: f64,
    pub rpe_top: f64,
    pub rpe_bottom: f64,
    pub orl_top: f64,
    pub choroid_bottom: f64,
    pub sclera_bottom: f64,
    pert: Perturbation,
    /// Anatomical to scan rotation.
    pub rotation: Matrix3<f64>,
    /// Scan position of the anatomical origin.
    pub origin: Point,
}

impl Anatomy {
    pub fn new(p: &PhantomParams, pert: Perturbation) -> Result<Self> {
        p.validate()?;
        let t = &p.thickness;
        let (ax, ay) = (p.pose.tilt_x_deg.to_radians(), p.pose.tilt_y_deg.to_radians());
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ax.cos(), -ax.sin(), 0.0, ax.sin(), ax.cos());
        let ry = Matrix3::new(ay.cos(), 0.0, ay.sin(), 0.0, 1.0, 0.0, -ay.sin(), 0.0, ay.cos());
        let rpe_top = t.rpe_mm / 2.0;
        let rpe_bottom = -t.rpe_mm / 2.0;
        let choroid_bottom = rpe_bottom - t.choroid_mm;
        let a = Self {
            r: p.bmo_radius_mm,
            cup: p.cup_depth_mm,
            cup_sigma: CUP_WIDTH_FACTOR * p.bmo_radius_mm,
            lc_depth: p.lc_depth_mm,
            lc_rc: p.lc_curvature_radius_mm,
            t_rnfl: t.rnfl_mm,
            t_gcl: t.gcl_ipl_mm,
            t_lc: t.lc_mm,
            tan_wall: p.canal_wall_angle_deg.to_radians().tan(),
            rpe_top,
            rpe_bottom,
            orl_top: rpe_top + t.orl_mm,
            choroid_bottom,
            sclera_bottom: choroid_bottom - t.sclera_mm,
            pert,
            rotation: rx * ry,
            origin: Point::new(p.pose.offset_x_mm, p.pose.offset_y_mm, -p.pose.bmo_depth_mm),
        };
        a.check_consistency(p)?;
        Ok(a)
    }

    fn check_consistency(&self, p: &PhantomParams) -> Result<()> {
        let deepest = self.origin.z - p.grid.bottom_z();
        let widest = self.canal_radius(-deepest - 1.0);
        if widest >= self.lc_rc {
            return Err(PhantomError::Impossible(format!(
                "LC curvature radius {} mm does not span the canal (radius up to {widest:.3} mm)",
                self.lc_rc
            )));
        }
        // LC must insert below the RPE
        let edge = self.lc_edge_radius();
        let edge_z = self.lc_anterior(edge);
        if edge_z > self.rpe_bottom - MIN_CLEARANCE_MM {
            return Err(PhantomError::Impossible(format!(
                "anterior LC rises to z = {edge_z:.3} mm at the canal wall, above the RPE"
            )));
        }
        let steps = 200;
        for s in 0..=steps {
            let rho = self.r * 2.0 * s as f64 / steps as f64;
            for q in 0..8 {
                let theta = q as f64 * std::f64::consts::FRAC_PI_4;
                if rho < edge {
                    let gap = self.ilm(rho, theta) - self.lc_anterior(rho);
                    if gap < MIN_CLEARANCE_MM {
                        return Err(PhantomError::Impossible(format!(
                            "inner limiting membrane meets the LC at {rho:.3} mm from the axis"
                        )));
                    }
                }
                if rho >= self.r && self.ilm(rho, theta) - self.gcl_top(rho, theta) < MIN_CLEARANCE_MM {
                    return Err(PhantomError::Impossible(format!(
                        "cup of depth {} mm cuts through the nerve fibre layer at {rho:.3} mm",
                        self.cup
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn fade(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        r2 / (r2 + self.r * self.r)
    }

    pub fn rnfl_thickness(&self, rho: f64, theta: f64) -> f64 {
        let m = 1.0 + self.pert.rnfl_amplitude * (2.0 * (theta - self.pert.rnfl_phase)).cos() * self.fade(rho);
        let d = rho - self.r;
        self.t_rnfl * m + RIM_BULGE_MM * (-d * d / (2.0 * RIM_BULGE_WIDTH_MM * RIM_BULGE_WIDTH_MM)).exp()
    }

    pub fn gcl_top(&self, rho: f64, theta: f64) -> f64 {
        let m = 1.0 + self.pert.gcl_amplitude * (2.0 * (theta - self.pert.gcl_phase)).cos() * self.fade(rho);
        self.orl_top + self.t_gcl * m
    }

    /// Inner limiting membrane height.
    pub fn ilm(&self, rho: f64, theta: f64) -> f64 {
        let g = (-rho * rho / (2.0 * self.cup_sigma * self.cup_sigma)).exp();
        self.gcl_top(rho, theta) + self.rnfl_thickness(rho, theta) - self.cup * g
    }

    /// Canal radius at height `z`: the BMO radius down to the base of the
    /// RPE, then a cone with the canal wall angle.
    #[inline]
    pub fn canal_radius(&self, z: f64) -> f64 {
        if z >= self.rpe_bottom {
            self.r
        } else {
            self.r + self.tan_wall * (self.rpe_bottom - z)
        }
    }

    /// Anterior LC height: a spherical cap, deepest at the axis.
    #[inline]
    pub fn lc_anterior(&self, rho: f64) -> f64 {
        -self.lc_depth + self.lc_rc - (self.lc_rc * self.lc_rc - rho * rho).max(0.0).sqrt()
    }

    #[inline]
    pub fn lc_posterior(&self, rho: f64) -> f64 {
        self.lc_anterior(rho) - self.t_lc
    }

    /// Radius where the anterior LC meets the canal wall.
    pub fn lc_edge_radius(&self) -> f64 {
        // ρ - canal_radius(lc_anterior(ρ)) is increasing in ρ
        let (mut lo, mut hi) = (0.0, self.lc_rc * 0.999);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid < self.canal_radius(self.lc_anterior(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[inline]
    pub fn to_scan(&self, q: &Point) -> Point {
        self.origin + self.rotation * q
    }

    #[inline]
    pub fn to_anatomical(&self, p: &Point) -> Point {
        self.rotation.transpose() * (p - self.origin)
    }

    /// Tissue label at an anatomical position.
    pub fn label(&self, q: &Point) -> u8 {
        let rho = q.x.hypot(q.y);
        let theta = q.y.atan2(q.x);
        let z = q.z;
        if z > self.ilm(rho, theta) {
            return Tissue::Background.id();
        }
        if rho < self.canal_radius(z) {
            let za = self.lc_anterior(rho);
            return if z >= za {
                Tissue::RnflPlt.id()
            } else if z >= za - self.t_lc {
                Tissue::Lc.id()
            } else {
                Tissue::Background.id()
            };
        }
        let t = if z >= self.gcl_top(rho, theta) {
            Tissue::RnflPlt
        } else if z >= self.orl_top {
            Tissue::GclIpl
        } else if z >= self.rpe_top {
            Tissue::Orl
        } else if z >= self.rpe_bottom {
            Tissue::RpeBm
        } else if z >= self.choroid_bottom {
            Tissue::Choroid
        } else if z >= self.sclera_bottom {
            Tissue::Sclera
        } else {
            Tissue::Background
        };
        t.id()
    }

    /// Height of a boundary at `(ρ, θ)`, or `None` where the boundary does
    /// not exist.
    pub fn boundary_height(&self, tissue: Tissue, role: BoundaryRole, rho: f64, theta: f64) -> Option<f64> {
        use BoundaryRole::*;
        let outside = |z: f64| if rho >= self.canal_radius(z) { Some(z) } else { None };
        let inside_lc = |z: f64| if rho < self.canal_radius(z) && rho < self.lc_rc { Some(z) } else { None };
        match (tissue, role) {
            (Tissue::RnflPlt, Anterior) => Some(self.ilm(rho, theta)),
            (Tissue::RnflPlt, Posterior) => {
                if rho >= self.r {
                    Some(self.gcl_top(rho, theta))
                } else {
                    inside_lc(self.lc_anterior(rho))
                }
            }
            (Tissue::GclIpl, Anterior) => outside(self.gcl_top(rho, theta)),
            (Tissue::GclIpl, Posterior) | (Tissue::Orl, Anterior) => outside(self.orl_top),
            (Tissue::Orl, Posterior) | (Tissue::RpeBm, Anterior) => outside(self.rpe_top),
            (Tissue::RpeBm, Posterior) | (Tissue::Choroid, Anterior) => outside(self.rpe_bottom),
            (Tissue::Choroid, Posterior) | (Tissue::Sclera, Anterior) => outside(self.choroid_bottom),
            (Tissue::Sclera, Posterior) => outside(self.sclera_bottom),
            (Tissue::Lc, Anterior) => inside_lc(self.lc_anterior(rho)),
            (Tissue::Lc, Posterior) => inside_lc(self.lc_posterior(rho)),
            (Tissue::Background, _) => None,
        }
    }
}
