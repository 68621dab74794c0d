use onh_geometry::{Point, Tissue};

use crate::error::{PhantomError, Result};
use crate::grid::VolumeGrid;

/// Labelled voxel grid of one scan, with the BMO points in scan
/// coordinates (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedVolume {
    pub grid: VolumeGrid,
    /// One tissue id per voxel, in [`VolumeGrid::index`] order.
    pub labels: Vec<u8>,
    pub bmo_points: Vec<Point>,
}

impl SegmentedVolume {
    pub fn new(grid: VolumeGrid, labels: Vec<u8>, bmo_points: Vec<Point>) -> Result<Self> {
        grid.validate()?;
        if labels.len() != grid.len() {
            return Err(PhantomError::Format(format!(
                "{} labels for a {:?} grid of {} voxels",
                labels.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| Tissue::from_id(l).is_none()) {
            return Err(PhantomError::Format(format!("label {bad} is not a tissue id (0..=7)")));
        }
        if bmo_points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(PhantomError::Format("non-finite BMO point".into()));
        }
        Ok(Self {
            grid,
            labels,
            bmo_points,
        })
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.grid.index(i, j, k)]
    }

    /// B-scan whose plane passes closest to the BMO centroid.
    pub fn central_bscan(&self) -> usize {
        let n = self.bmo_points.len().max(1) as f64;
        let cx = self.bmo_points.iter().map(|p| p.x).sum::<f64>() / n;
        let i = (cx / self.grid.spacing_mm[0] + (self.grid.dims[0] - 1) as f64 / 2.0).round();
        i.clamp(0.0, (self.grid.dims[0] - 1) as f64) as usize
    }

    /// Labels of B-scan `i` as an `A-scans × depth` row-major slice.
    pub fn bscan(&self, i: usize) -> &[u8] {
        let n = self.grid.dims[1] * self.grid.dims[2];
        &self.labels[i * n..(i + 1) * n]
    }

    pub fn count(&self, tissue: Tissue) -> usize {
        self.labels.iter().filter(|&&l| l == tissue.id()).count()
    }
}

/// Per-voxel displacement (mm, scan axes) on a volume's grid with the mask
/// of LC voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub grid: VolumeGrid,
    pub u: Vec<[f64; 3]>,
    pub lc_mask: Vec<bool>,
    /// Rigid part added on top of the deformation, when known.
    pub rigid_translation_mm: [f64; 3],
}

impl DisplacementField {
    pub fn new(grid: VolumeGrid, u: Vec<[f64; 3]>, lc_mask: Vec<bool>, rigid_translation_mm: [f64; 3]) -> Result<Self> {
        grid.validate()?;
        if u.len() != grid.len() || lc_mask.len() != grid.len() {
            return Err(PhantomError::Format(format!(
                "field has {} vectors and {} mask entries for a {:?} grid",
                u.len(),
                lc_mask.len(),
                grid.dims
            )));
        }
        if u.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(PhantomError::Format("non-finite displacement".into()));
        }
        Ok(Self {
            grid,
            u,
            lc_mask,
            rigid_translation_mm,
        })
    }

    /// Field with every vector equal to `u`, masking `mask`.
    pub fn uniform(grid: VolumeGrid, u: [f64; 3], lc_mask: Vec<bool>) -> Result<Self> {
        Self::new(grid, vec![u; grid.len()], lc_mask, [0.0; 3])
    }

    /// Field sampled from a function of voxel-centre position.
    pub fn from_fn(grid: VolumeGrid, lc_mask: Vec<bool>, f: impl Fn(&Point) -> [f64; 3]) -> Result<Self> {
        let mut u = Vec::with_capacity(grid.len());
        for i in 0..grid.dims[0] {
            for j in 0..grid.dims[1] {
                for k in 0..grid.dims[2] {
                    u.push(f(&grid.position(i, j, k)));
                }
            }
        }
        Self::new(grid, u, lc_mask, [0.0; 3])
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        self.u[self.grid.index(i, j, k)]
    }
}
