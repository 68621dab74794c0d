use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use nalgebra::{DMatrix, DVector};
use onh_geometry::{canonical_transform, BmoPlane, BoundaryRole, BoundarySurface, NearestGrid, Point, Tissue};
use onh_phantom::SegmentedVolume;
use serde::{Deserialize, Serialize};

use crate::error::{BaselineError, Result};

pub const OCTANTS: usize = 8;
pub const FEATURE_COUNT: usize = 3 * OCTANTS + 5;

/// Nearest surface points used to read a surface's height on the canal axis.
const AXIS_FIT_POINTS: usize = 24;
/// Curvatures below this (1/mm) count as flat in the shape index.
const FLAT_CURVATURE: f64 = 1e-6;

/// The 29 structural parameters of one ONH. Octant `o` covers angles
/// `[o, o + 1) * 45°` about the canal axis, counterclockwise from `+x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParameterVector {
    /// Mean over the octant's BMO points of the shortest distance to the ILM.
    pub min_rim_width_mm: [f64; OCTANTS],
    pub rnfl_thickness_mm: [f64; OCTANTS],
    pub gcl_ipl_thickness_mm: [f64; OCTANTS],
    /// ILM depth below the BMO plane on the canal axis.
    pub prelamina_depth_mm: f64,
    pub min_prelamina_thickness_mm: f64,
    /// Anterior LC depth below the BMO plane on the canal axis.
    pub lc_depth_mm: f64,
    /// +1 for a bowl opening anteriorly, -1 for a dome, 0 when flat.
    pub lc_shape_index: f64,
    pub bmo_area_mm2: f64,
}

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for prefix in ["min_rim_width", "rnfl_thickness", "gcl_ipl_thickness"] {
        names.extend((0..OCTANTS).map(|o| format!("{prefix}_o{o}_mm")));
    }
    names.extend(
        [
            "prelamina_depth_mm",
            "min_prelamina_thickness_mm",
            "lc_depth_mm",
            "lc_shape_index",
            "bmo_area_mm2",
        ]
        .map(String::from),
    );
    names
}

/// `id,` followed by the feature names.
pub fn csv_header() -> String {
    format!("id,{}", feature_names().join(","))
}

impl StructuralParameterVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_COUNT);
        v.extend_from_slice(&self.min_rim_width_mm);
        v.extend_from_slice(&self.rnfl_thickness_mm);
        v.extend_from_slice(&self.gcl_ipl_thickness_mm);
        v.extend_from_slice(&[
            self.prelamina_depth_mm,
            self.min_prelamina_thickness_mm,
            self.lc_depth_mm,
            self.lc_shape_index,
            self.bmo_area_mm2,
        ]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != FEATURE_COUNT {
            return Err(BaselineError::Shape(format!("{} values, expected {FEATURE_COUNT}", v.len())));
        }
        let oct = |k: usize| -> [f64; OCTANTS] { v[k * OCTANTS..(k + 1) * OCTANTS].try_into().expect("8 values") };
        Ok(Self {
            min_rim_width_mm: oct(0),
            rnfl_thickness_mm: oct(1),
            gcl_ipl_thickness_mm: oct(2),
            prelamina_depth_mm: v[24],
            min_prelamina_thickness_mm: v[25],
            lc_depth_mm: v[26],
            lc_shape_index: v[27],
            bmo_area_mm2: v[28],
        })
    }

    pub fn csv_row(&self, id: &str) -> String {
        let vals: Vec<String> = self.to_vec().iter().map(|v| v.to_string()).collect();
        format!("{id},{}", vals.join(","))
    }
}

pub fn octant(x: f64, y: f64) -> usize {
    let t = y.atan2(x).rem_euclid(TAU);
    ((t / FRAC_PI_4) as usize).min(OCTANTS - 1)
}

fn role_name(role: BoundaryRole) -> &'static str {
    match role {
        BoundaryRole::Anterior => "anterior",
        BoundaryRole::Posterior => "posterior",
    }
}

/// Least-squares `z = a + b x + c y + d x^2 + e x y + f y^2`; returns
/// `[a, b, c, d, e, f]`.
pub fn fit_quadric(points: &[Point]) -> Result<[f64; 6]> {
    if points.len() < 6 {
        return Err(BaselineError::Degenerate(format!("quadric from {} points", points.len())));
    }
    let a = DMatrix::from_fn(points.len(), 6, |i, j| {
        let p = &points[i];
        match j {
            0 => 1.0,
            1 => p.x,
            2 => p.y,
            3 => p.x * p.x,
            4 => p.x * p.y,
            _ => p.y * p.y,
        }
    });
    let z = DVector::from_iterator(points.len(), points.iter().map(|p| p.z));
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    if !(smax > 0.0) || s.min() <= 1e-10 * smax {
        return Err(BaselineError::Degenerate("quadric fit is rank deficient".into()));
    }
    let c = svd
        .solve(&z, 0.0)
        .map_err(|e| BaselineError::Degenerate(format!("quadric fit: {e}")))?;
    Ok([c[0], c[1], c[2], c[3], c[4], c[5]])
}

/// Principal curvatures `(k1 >= k2)` of a fitted quadric at `(0, 0)`.
pub fn principal_curvatures(q: &[f64; 6]) -> (f64, f64) {
    let (zx, zy) = (q[1], q[2]);
    let (zxx, zxy, zyy) = (2.0 * q[3], q[4], 2.0 * q[5]);
    let w = (1.0 + zx * zx + zy * zy).sqrt();
    let (e, f, g) = (1.0 + zx * zx, zx * zy, 1.0 + zy * zy);
    let (l, m, n) = (zxx / w, zxy / w, zyy / w);
    let det_i = e * g - f * f;
    let k = (l * n - m * m) / det_i;
    let h = (e * n - 2.0 * f * m + g * l) / (2.0 * det_i);
    let disc = (h * h - k).max(0.0).sqrt();
    (h + disc, h - disc)
}

/// `(2/pi) atan((k1 + k2) / (k1 - k2))`, 0 for a flat patch.
pub fn shape_index(k1: f64, k2: f64) -> f64 {
    if k1.abs() < FLAT_CURVATURE && k2.abs() < FLAT_CURVATURE {
        return 0.0;
    }
    (k1 + k2).atan2(k1 - k2) / FRAC_PI_2
}

/// Polygon area of points projected to the xy plane and ordered by angle
/// about their centroid.
pub fn shoelace_area(points: &[Point]) -> Result<f64> {
    if points.len() < 3 {
        return Err(BaselineError::Degenerate(format!("area of {} BMO points", points.len())));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mut ring: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    ring.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
    let mut twice = 0.0;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    Ok(0.5 * twice.abs())
}

/// Height of a surface on the canal axis from a quadric through its nearest
/// points in xy.
fn axis_height(points: &[Point]) -> Result<f64> {
    let mut by_rho: Vec<&Point> = points.iter().collect();
    by_rho.sort_by(|a, b| a.x.hypot(a.y).total_cmp(&b.x.hypot(b.y)));
    let near: Vec<Point> = by_rho.into_iter().take(AXIS_FIT_POINTS).copied().collect();
    Ok(fit_quadric(&near)?[0])
}

fn flatten(points: &[Point]) -> Vec<Point> {
    points.iter().map(|p| Point::new(p.x, p.y, 0.0)).collect()
}

/// Mean anterior-minus-posterior height of a layer on the ring of radius
/// `radius` (half-width `half_width`), per octant.
fn ring_thickness(
    anterior: &BoundarySurface,
    posterior: &BoundarySurface,
    radius: f64,
    half_width: f64,
) -> Result<[f64; OCTANTS]> {
    let below = NearestGrid::new(&flatten(&posterior.points))?;
    let mut sum = [0.0; OCTANTS];
    let mut count = [0usize; OCTANTS];
    for p in &anterior.points {
        if (p.x.hypot(p.y) - radius).abs() > half_width {
            continue;
        }
        let (j, _) = below.nearest(&Point::new(p.x, p.y, 0.0));
        let o = octant(p.x, p.y);
        sum[o] += p.z - posterior.points[j].z;
        count[o] += 1;
    }
    let mut out = [0.0; OCTANTS];
    for o in 0..OCTANTS {
        if count[o] == 0 {
            return Err(BaselineError::Degenerate(format!(
                "{} thickness: no points in octant {o} at radius {radius:.3} mm",
                anterior.tissue.name()
            )));
        }
        out[o] = sum[o] / count[o] as f64;
    }
    Ok(out)
}

/// Measures the structural parameters in the canonical frame of `plane`.
/// `surfaces` and the volume's BMO points are in scan coordinates.
pub fn extract_structural_parameters(
    volume: &SegmentedVolume,
    surfaces: &[BoundarySurface],
    plane: &BmoPlane,
) -> Result<StructuralParameterVector> {
    let t = canonical_transform(plane);
    let find = |tissue: Tissue, role: BoundaryRole| -> Result<BoundarySurface> {
        surfaces
            .iter()
            .find(|s| s.tissue == tissue && s.role == role)
            .map(|s| t.apply_surface(s))
            .ok_or(BaselineError::MissingSurface {
                tissue: tissue.name(),
                role: role_name(role),
            })
    };
    let ilm = find(Tissue::RnflPlt, BoundaryRole::Anterior)?;
    let rnfl_post = find(Tissue::RnflPlt, BoundaryRole::Posterior)?;
    let gcl = find(Tissue::GclIpl, BoundaryRole::Anterior)?;
    let gcl_post = find(Tissue::GclIpl, BoundaryRole::Posterior)?;
    let lc = find(Tissue::Lc, BoundaryRole::Anterior)?;
    if volume.bmo_points.len() < 3 {
        return Err(BaselineError::Degenerate(format!("{} BMO points", volume.bmo_points.len())));
    }
    let bmo: Vec<Point> = volume.bmo_points.iter().map(|p| t.apply(p)).collect();
    let r_bmo = bmo.iter().map(|p| p.x.hypot(p.y)).sum::<f64>() / bmo.len() as f64;

    let ilm_index = NearestGrid::new(&ilm.points)?;
    let mut rim_sum = [0.0; OCTANTS];
    let mut rim_count = [0usize; OCTANTS];
    for b in &bmo {
        let o = octant(b.x, b.y);
        rim_sum[o] += ilm_index.nearest(b).1;
        rim_count[o] += 1;
    }
    let mut min_rim_width_mm = [0.0; OCTANTS];
    for o in 0..OCTANTS {
        if rim_count[o] == 0 {
            return Err(BaselineError::Degenerate(format!("rim width: no BMO points in octant {o}")));
        }
        min_rim_width_mm[o] = rim_sum[o] / rim_count[o] as f64;
    }

    let s = volume.grid.spacing_mm;
    let half_width = s[0].max(s[1]);
    let rnfl_thickness_mm = ring_thickness(&ilm, &rnfl_post, 1.5 * r_bmo, half_width)?;
    let gcl_ipl_thickness_mm = ring_thickness(&gcl, &gcl_post, 1.5 * r_bmo, half_width)?;

    let prelamina_depth_mm = -axis_height(&ilm.points)?;
    let lc_depth_mm = -axis_height(&lc.points)?;

    let lc_index = NearestGrid::new(&lc.points)?;
    let min_prelamina_thickness_mm = ilm
        .points
        .iter()
        .filter(|p| p.x.hypot(p.y) < r_bmo)
        .map(|p| lc_index.nearest(p).1)
        .min_by(f64::total_cmp)
        .ok_or_else(|| BaselineError::Degenerate("no ILM points inside the BMO".into()))?;

    let (k1, k2) = principal_curvatures(&fit_quadric(&lc.points)?);
    Ok(StructuralParameterVector {
        min_rim_width_mm,
        rnfl_thickness_mm,
        gcl_ipl_thickness_mm,
        prelamina_depth_mm,
        min_prelamina_thickness_mm,
        lc_depth_mm,
        lc_shape_index: shape_index(k1, k2),
        bmo_area_mm2: shoelace_area(&bmo)?,
    })
}
