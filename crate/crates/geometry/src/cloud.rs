use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::{Point, Tissue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryRole {
    Anterior,
    Posterior,
}

/// Sampled boundary of one tissue, in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySurface {
    pub tissue: Tissue,
    pub role: BoundaryRole,
    pub points: Vec<Point>,
}

impl BoundarySurface {
    pub fn new(tissue: Tissue, role: BoundaryRole, points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(GeometryError::InvalidSurface(format!(
                "{} {:?} surface has {} points, need at least 3",
                tissue.name(),
                role,
                points.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::InvalidSurface(format!(
                "{} {:?} surface has non-finite coordinates",
                tissue.name(),
                role
            )));
        }
        Ok(Self { tissue, role, points })
    }
}

/// `N` points with a thickness channel and a tissue tag per point.
#[derive(Debug, Clone, PartialEq)]
pub struct OnhPointCloud {
    pub positions: Vec<Point>,
    /// Local tissue thickness in mm, 0 where not applicable.
    pub thickness: Vec<f64>,
    pub tissue: Vec<Tissue>,
    /// Set once the cloud is in the BMO-aligned frame.
    pub canonical: bool,
}

impl OnhPointCloud {
    pub fn new(positions: Vec<Point>, thickness: Vec<f64>, tissue: Vec<Tissue>, canonical: bool) -> Result<Self> {
        if positions.is_empty() {
            return Err(GeometryError::Empty("point cloud".into()));
        }
        if thickness.len() != positions.len() || tissue.len() != positions.len() {
            return Err(GeometryError::Parse(format!(
                "channel lengths differ: {} positions, {} thickness, {} tissue",
                positions.len(),
                thickness.len(),
                tissue.len()
            )));
        }
        if thickness.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(GeometryError::Parse("thickness must be finite and >= 0".into()));
        }
        Ok(Self {
            positions,
            thickness,
            tissue,
            canonical,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Row-major `N x 4` feature matrix: x, y, z, thickness.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 4);
        for (p, t) in self.positions.iter().zip(&self.thickness) {
            out.extend_from_slice(&[p.x, p.y, p.z, *t]);
        }
        out
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> OnhPointCloud {
        OnhPointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            thickness: indices.iter().map(|&i| self.thickness[i]).collect(),
            tissue: indices.iter().map(|&i| self.tissue[i]).collect(),
            canonical: self.canonical,
        }
    }

    /// Marks a cloud as already BMO-aligned, e.g. after reading one written
    /// by the point-cloud extractor.
    pub fn assume_canonical(mut self) -> Self {
        self.canonical = true;
        self
    }
}
