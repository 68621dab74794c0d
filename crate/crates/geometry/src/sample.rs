use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeometryError, Result};
use crate::{BoundaryRole, BoundarySurface, NearestGrid, OnhPointCloud, Tissue};

/// Distance from every anterior point to the closest posterior point.
pub fn local_thickness(anterior: &BoundarySurface, posterior: &BoundarySurface) -> Result<Vec<f64>> {
    if anterior.tissue != posterior.tissue {
        return Err(GeometryError::InvalidSurface(format!(
            "thickness between different tissues ({} vs {})",
            anterior.tissue.name(),
            posterior.tissue.name()
        )));
    }
    if posterior.points.is_empty() {
        return Err(GeometryError::Empty("posterior surface".into()));
    }
    let grid = NearestGrid::new(&posterior.points)?;
    Ok(anterior.points.iter().map(|p| grid.nearest(p).1.sqrt()).collect())
}

/// Draws `n` points uniformly without replacement from the union of all
/// boundary points (all of them when fewer are available). Anterior points
/// carry their tissue's local thickness when a posterior surface of the same
/// tissue is present; every other point carries 0.
pub fn sample_point_cloud(boundaries: &[BoundarySurface], n: usize, seed: u64) -> Result<OnhPointCloud> {
    sample_point_cloud_with(boundaries, boundaries, n, seed)
}

/// As [`sample_point_cloud`], but points are drawn from `sources` only while
/// thickness is measured against the posterior surfaces in `references`.
pub fn sample_point_cloud_with(
    sources: &[BoundarySurface],
    references: &[BoundarySurface],
    n: usize,
    seed: u64,
) -> Result<OnhPointCloud> {
    if sources.is_empty() {
        return Err(GeometryError::Empty("boundary list".into()));
    }
    let total: usize = sources.iter().map(|b| b.points.len()).sum();
    if total == 0 {
        return Err(GeometryError::Empty("boundary points".into()));
    }
    let chosen = choose_indices(total, n, seed);

    // (surface, point) for each chosen flat index; `chosen` is ascending
    let mut offsets = Vec::with_capacity(sources.len() + 1);
    offsets.push(0);
    for b in sources {
        offsets.push(offsets.last().unwrap() + b.points.len());
    }
    let mut grids: Vec<Option<Option<NearestGrid>>> = vec![None; sources.len()];
    let mut positions = Vec::with_capacity(chosen.len());
    let mut thickness = Vec::with_capacity(chosen.len());
    let mut tissue = Vec::with_capacity(chosen.len());
    let mut s = 0;
    for &flat in &chosen {
        while flat >= offsets[s + 1] {
            s += 1;
        }
        let surface = &sources[s];
        let p = surface.points[flat - offsets[s]];
        let t = if surface.role == BoundaryRole::Anterior {
            let grid = grids[s].get_or_insert_with(|| {
                references
                    .iter()
                    .find(|b| b.tissue == surface.tissue && b.role == BoundaryRole::Posterior && !b.points.is_empty())
                    .map(|b| NearestGrid::new(&b.points).expect("nonempty"))
            });
            grid.as_ref().map_or(0.0, |g| g.nearest(&p).1.sqrt())
        } else {
            0.0
        };
        positions.push(p);
        thickness.push(t);
        tissue.push(surface.tissue);
    }
    OnhPointCloud::new(positions, thickness, tissue, false)
}

/// Ascending indices of an `n`-subset of `0..total` from a partial
/// Fisher-Yates shuffle. Uses 64-bit integer ranges only, so the draw is the
/// same on every platform.
pub(crate) fn choose_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    let n = n.min(total);
    let mut idx: Vec<usize> = (0..total).collect();
    if n < total {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n {
            let j = rng.random_range(i as u64..total as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx.sort_unstable();
    }
    idx
}

/// Boundaries that contribute points to an ONH cloud: the anterior boundary
/// of every tissue plus the posterior boundaries of the sclera and the LC.
pub fn is_cloud_source(s: &BoundarySurface) -> bool {
    s.role == BoundaryRole::Anterior || matches!(s.tissue, Tissue::Sclera | Tissue::Lc)
}

/// Samples an ONH cloud from a full set of tissue boundaries: points from
/// [`is_cloud_source`] surfaces, thickness from every posterior surface.
pub fn extract_point_cloud(surfaces: &[BoundarySurface], n: usize, seed: u64) -> Result<OnhPointCloud> {
    let sources: Vec<BoundarySurface> = surfaces.iter().filter(|s| is_cloud_source(s)).cloned().collect();
    sample_point_cloud_with(&sources, surfaces, n, seed)
}
