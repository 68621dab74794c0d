use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{GeometryError, Result};
use crate::{BoundarySurface, OnhPointCloud, Point};

/// Least-squares plane through the BMO points: `normal . x = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmoPlane {
    pub normal: Point,
    pub offset: f64,
    pub centroid: Point,
}

/// Fits the plane minimising summed squared orthogonal distances. The normal
/// is oriented toward `+z` (anterior in scan coordinates).
pub fn fit_bmo_plane(bmo_points: &[Point]) -> Result<BmoPlane> {
    if bmo_points.len() < 3 {
        return Err(GeometryError::Degenerate(format!(
            "{} BMO points, need at least 3",
            bmo_points.len()
        )));
    }
    let n = bmo_points.len() as f64;
    let centroid = bmo_points.iter().fold(Point::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in bmo_points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l_mid, l_max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(l_max > 0.0) || l_mid <= 1e-12 * l_max {
        return Err(GeometryError::Degenerate("BMO points are collinear or coincident".into()));
    }
    let mut normal: Point = eig.eigenvectors.column(order[0]).into_owned().normalize();
    let flip = if normal.z != 0.0 {
        normal.z < 0.0
    } else if normal.y != 0.0 {
        normal.y < 0.0
    } else {
        normal.x < 0.0
    };
    if flip {
        normal = -normal;
    }
    Ok(BmoPlane {
        normal,
        offset: normal.dot(&centroid),
        centroid,
    })
}

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Point,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Point::zeros(),
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Point) -> Point {
        self.rotation * v
    }

    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_surface(&self, s: &BoundarySurface) -> BoundarySurface {
        BoundarySurface {
            tissue: s.tissue,
            role: s.role,
            points: s.points.iter().map(|p| self.apply(p)).collect(),
        }
    }
}

/// Rigid map into the canonical frame: BMO centroid to the origin, plane
/// normal to `+z`, and the in-plane projection of the scan x-axis to `+x`.
pub fn canonical_transform(plane: &BmoPlane) -> RigidTransform {
    let n = plane.normal;
    let mut e1 = Point::x() - n * n.x;
    if e1.norm() < 1e-9 {
        e1 = Point::y() - n * n.y;
    }
    let e1 = e1.normalize();
    let e2 = n.cross(&e1);
    let rotation = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), n.transpose()]);
    RigidTransform {
        rotation,
        translation: -(rotation * plane.centroid),
    }
}

pub fn canonicalize(cloud: &OnhPointCloud, plane: &BmoPlane) -> OnhPointCloud {
    let t = canonical_transform(plane);
    OnhPointCloud {
        positions: cloud.positions.iter().map(|p| t.apply(p)).collect(),
        thickness: cloud.thickness.clone(),
        tissue: cloud.tissue.clone(),
        canonical: true,
    }
}
