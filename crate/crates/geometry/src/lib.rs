//! Point-cloud geometry for optic-nerve-head scans.
//!
//! Clouds live in millimetres. The canonical frame puts the centre of the
//! Bruch's-membrane-opening (BMO) points at the origin and the normal of their
//! best-fit plane along `+z` (anterior).

mod augment;
mod cloud;
mod error;
pub mod io;
mod knn;
mod plane;
mod sample;
mod tissue;

pub use augment::{augment, AugmentationConfig};
pub use cloud::{BoundaryRole, BoundarySurface, OnhPointCloud};
pub use error::{GeometryError, Result};
pub use knn::{knn, knn_all, sq_dist, NearestGrid};
pub use plane::{canonical_transform, canonicalize, fit_bmo_plane, BmoPlane, RigidTransform};
pub use sample::{
    extract_point_cloud, is_cloud_source, local_thickness, sample_point_cloud, sample_point_cloud_with,
};
pub use tissue::Tissue;

pub use nalgebra::{Matrix3, Vector3};

pub type Point = Vector3<f64>;
