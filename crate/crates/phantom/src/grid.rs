use onh_geometry::Point;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Raster of a scan: axis 0 indexes B-scans, axis 1 A-scans within a B-scan,
/// axis 2 pixels along an A-scan (depth, increasing posteriorly).
///
/// Voxel `(i, j, k)` has its centre at
/// `x = (i - (n0-1)/2)·s0`, `y = (j - (n1-1)/2)·s1`, `z = -k·s2`,
/// so `+z` points anteriorly and the top of the scan is `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeGrid {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
}

impl VolumeGrid {
    pub const FULL_DIMS: [usize; 3] = [97, 384, 496];
    pub const FULL_SPACING_MM: [f64; 3] = [0.035, 0.0115, 0.00387];
    pub const DESK_DIMS: [usize; 3] = [33, 128, 160];

    /// Clinical raster.
    pub fn full() -> Self {
        Self {
            dims: Self::FULL_DIMS,
            spacing_mm: Self::FULL_SPACING_MM,
        }
    }

    /// Reduced raster covering the same field of view.
    pub fn desk() -> Self {
        Self::same_field_of_view(Self::DESK_DIMS)
    }

    pub fn same_field_of_view(dims: [usize; 3]) -> Self {
        let mut spacing_mm = [0.0; 3];
        for a in 0..3 {
            spacing_mm[a] = Self::FULL_SPACING_MM[a] * Self::FULL_DIMS[a] as f64 / dims[a].max(1) as f64;
        }
        Self { dims, spacing_mm }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 3) {
            return Err(invalid("grid.dims", format!("{:?}: every axis needs at least 3 voxels", self.dims)));
        }
        if self.spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("grid.spacing_mm", format!("{:?}: spacing must be positive", self.spacing_mm)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point {
        Point::new(
            (i as f64 - (self.dims[0] - 1) as f64 / 2.0) * self.spacing_mm[0],
            (j as f64 - (self.dims[1] - 1) as f64 / 2.0) * self.spacing_mm[1],
            -(k as f64) * self.spacing_mm[2],
        )
    }

    /// Physical displacement of one index step along `axis`.
    pub fn signed_step(&self, axis: usize) -> f64 {
        match axis {
            0 => self.spacing_mm[0],
            1 => self.spacing_mm[1],
            _ => -self.spacing_mm[2],
        }
    }

    /// Lateral half-extents of the voxel-centre lattice.
    pub fn half_extent_xy(&self) -> (f64, f64) {
        (
            (self.dims[0] - 1) as f64 / 2.0 * self.spacing_mm[0],
            (self.dims[1] - 1) as f64 / 2.0 * self.spacing_mm[1],
        )
    }

    /// `z` of the deepest voxel centre.
    pub fn bottom_z(&self) -> f64 {
        -((self.dims[2] - 1) as f64) * self.spacing_mm[2]
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.spacing_mm.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &Point) -> bool {
        let (hx, hy) = self.half_extent_xy();
        p.x.abs() <= hx && p.y.abs() <= hy && p.z <= 0.0 && p.z >= self.bottom_z()
    }

    /// Index of the voxel whose centre is closest to `p`, if `p` lies inside
    /// the voxel-centre lattice.
    pub fn nearest_index(&self, p: &Point) -> Option<[usize; 3]> {
        if !self.contains(p) {
            return None;
        }
        let i = (p.x / self.spacing_mm[0] + (self.dims[0] - 1) as f64 / 2.0).round() as usize;
        let j = (p.y / self.spacing_mm[1] + (self.dims[1] - 1) as f64 / 2.0).round() as usize;
        let k = (-p.z / self.spacing_mm[2]).round() as usize;
        Some([i.min(self.dims[0] - 1), j.min(self.dims[1] - 1), k.min(self.dims[2] - 1)])
    }
}

impl Default for VolumeGrid {
    fn default() -> Self {
        Self::full()
    }
}
