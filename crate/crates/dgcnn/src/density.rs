use onh_geometry::{OnhPointCloud, Point};

use crate::error::{DgcnnError, Result};
use crate::model::CriticalPointSet;

/// Default neighborhood radius of the density map, in mm.
pub const DENSITY_RADIUS_MM: f64 = 0.075;

/// Critical points of several ONHs in their shared canonical frame.
/// `source[i]` is the ONH that contributed `points[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCriticalPoints {
    pub points: Vec<Point>,
    pub source: Vec<usize>,
}

/// Pools critical points, each ONH contributing every distinct point once.
pub fn pool_critical_points(
    sets: &[(&OnhPointCloud, &CriticalPointSet)],
) -> Result<PooledCriticalPoints> {
    let mut points = Vec::new();
    let mut source = Vec::new();
    for (onh, (cloud, critical)) in sets.iter().enumerate() {
        if !cloud.canonical {
            return Err(DgcnnError::NotCanonical);
        }
        let mut idx = critical.indices.clone();
        idx.sort_unstable();
        idx.dedup();
        for i in idx {
            let p = cloud.positions.get(i).ok_or_else(|| {
                DgcnnError::Weights(format!(
                    "critical index {i} outside cloud of {}",
                    cloud.len()
                ))
            })?;
            points.push(*p);
            source.push(onh);
        }
    }
    if points.is_empty() {
        return Err(DgcnnError::Empty("pooled critical points"));
    }
    Ok(PooledCriticalPoints { points, source })
}

/// For each pooled point, the number of OTHER pooled points within `radius`
/// (inclusive).
pub fn critical_density_map(points: &[Point], radius: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(DgcnnError::Empty("pooled critical points"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(DgcnnError::Config(format!(
            "radius {radius} must be finite and >= 0"
        )));
    }
    let r2 = radius * radius;
    // Sort by x so each sweep stops once x alone exceeds the radius.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let mut counts = vec![0usize; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if points[j].x - points[i].x > radius {
                break;
            }
            if (points[j] - points[i]).norm_squared() <= r2 {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    Ok(counts)
}

/// Share of the density mass (sum of counts) carried by points whose
/// distance from the z axis lies in `[lo, hi] * radius_of(source)`. `None`
/// when the total mass is zero.
pub fn annulus_mass_fraction(
    pooled: &PooledCriticalPoints,
    counts: &[usize],
    radius_of: impl Fn(usize) -> f64,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let mut inside = 0usize;
    let mut total = 0usize;
    for ((p, &onh), &c) in pooled.points.iter().zip(&pooled.source).zip(counts) {
        let r = radius_of(onh);
        let rho = p.x.hypot(p.y);
        total += c;
        if rho >= lo * r && rho <= hi * r {
            inside += c;
        }
    }
    (total > 0).then(|| inside as f64 / total as f64)
}
