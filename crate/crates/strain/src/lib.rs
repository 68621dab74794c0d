//! Strain analysis of displacement fields and the robust/fragile labelling
//! rule.
//!
//! Gradients are central differences on the voxel grid, strain is the
//! Green–Lagrange tensor `E = ½(∇u + ∇uᵀ + ∇uᵀ∇u)`, and the scalar summary
//! is a pluggable [`EffectiveStrain`] (von Mises equivalent by default),
//! averaged over the interior of the lamina cribrosa mask.

use nalgebra::Matrix3;
use onh_phantom::DisplacementField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.04;

#[derive(Debug, Error, PartialEq)]
pub enum StrainError {
    #[error("voxel {voxel:?} lies on the border of a {dims:?} grid")]
    BorderVoxel { voxel: [usize; 3], dims: [usize; 3] },
    #[error("non-finite displacement gradient")]
    NonFinite,
    #[error("strain tensor is not symmetric (max |E - Eᵀ| = {0:e})")]
    Asymmetric(f64),
    #[error("LC mask is empty after erosion")]
    EmptyMask,
    #[error("effective strain must be finite and >= 0, got {0}")]
    NegativeStrain(f64),
    #[error("threshold must be finite and > 0, got {0}")]
    Threshold(f64),
}

pub type Result<T> = std::result::Result<T, StrainError>;

/// Symmetric 3×3 strain tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainTensor(Matrix3<f64>);

impl StrainTensor {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(StrainError::NonFinite);
        }
        let asym = (m - m.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(StrainError::Asymmetric(asym));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn deviator(&self) -> Matrix3<f64> {
        self.0 - Matrix3::identity() * (self.0.trace() / 3.0)
    }
}

/// `G[(a, b)] = ∂u_a/∂x_b` at an interior voxel.
pub fn displacement_gradient(field: &DisplacementField, voxel: [usize; 3]) -> Result<Matrix3<f64>> {
    let g = &field.grid;
    if (0..3).any(|a| voxel[a] == 0 || voxel[a] + 1 >= g.dims[a]) {
        return Err(StrainError::BorderVoxel {
            voxel,
            dims: g.dims,
        });
    }
    Ok(gradient_unchecked(field, voxel))
}

#[inline]
fn gradient_unchecked(field: &DisplacementField, [i, j, k]: [usize; 3]) -> Matrix3<f64> {
    let g = &field.grid;
    let pairs = [
        (field.at(i + 1, j, k), field.at(i - 1, j, k)),
        (field.at(i, j + 1, k), field.at(i, j - 1, k)),
        (field.at(i, j, k + 1), field.at(i, j, k - 1)),
    ];
    let mut m = Matrix3::zeros();
    for (b, (plus, minus)) in pairs.iter().enumerate() {
        let h2 = 2.0 * g.signed_step(b);
        for a in 0..3 {
            m[(a, b)] = (plus[a] - minus[a]) / h2;
        }
    }
    m
}

pub fn green_lagrange(grad_u: &Matrix3<f64>) -> Result<StrainTensor> {
    if !grad_u.iter().all(|v| v.is_finite()) {
        return Err(StrainError::NonFinite);
    }
    let e = 0.5 * (grad_u + grad_u.transpose() + grad_u.transpose() * grad_u);
    // products can differ in the last bit across the diagonal
    StrainTensor::new(0.5 * (e + e.transpose()))
}

/// Scalar summary of a strain tensor.
pub trait EffectiveStrain {
    fn name(&self) -> &'static str;
    fn evaluate(&self, e: &StrainTensor) -> f64;
}

/// `√(⅔ dev E : dev E)`; equals ε for `diag(ε, -ε/2, -ε/2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VonMises;

impl EffectiveStrain for VonMises {
    fn name(&self) -> &'static str {
        "von-mises"
    }

    fn evaluate(&self, e: &StrainTensor) -> f64 {
        let d = e.deviator();
        (2.0 / 3.0 * d.component_mul(&d).sum()).sqrt()
    }
}

/// Frobenius norm of the full tensor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Frobenius;

impl EffectiveStrain for Frobenius {
    fn name(&self) -> &'static str {
        "frobenius"
    }

    fn evaluate(&self, e: &StrainTensor) -> f64 {
        e.matrix().norm()
    }
}

pub fn effective_strain(e: &StrainTensor) -> f64 {
    VonMises.evaluate(e)
}

/// Mask voxels whose six face neighbours are all in the mask, in index
/// order. Border voxels never qualify.
pub fn interior_lc_voxels(field: &DisplacementField) -> Vec<usize> {
    let g = &field.grid;
    let [n0, n1, n2] = g.dims;
    let m = &field.lc_mask;
    let mut out = Vec::new();
    for (idx, &inside) in m.iter().enumerate() {
        if !inside {
            continue;
        }
        let [i, j, k] = g.coords(idx);
        if i == 0 || j == 0 || k == 0 || i + 1 == n0 || j + 1 == n1 || k + 1 == n2 {
            continue;
        }
        let (si, sj) = (n1 * n2, n2);
        if m[idx - si] && m[idx + si] && m[idx - sj] && m[idx + sj] && m[idx - 1] && m[idx + 1] {
            out.push(idx);
        }
    }
    out
}

/// Unweighted mean effective strain over the eroded LC mask.
pub fn lc_average_effective_strain(field: &DisplacementField) -> Result<f64> {
    lc_average_effective_strain_with(field, &VonMises)
}

pub fn lc_average_effective_strain_with(field: &DisplacementField, measure: &dyn EffectiveStrain) -> Result<f64> {
    let voxels = interior_lc_voxels(field);
    if voxels.is_empty() {
        return Err(StrainError::EmptyMask);
    }
    let mut sum = 0.0;
    for &idx in &voxels {
        let e = green_lagrange(&gradient_unchecked(field, field.grid.coords(idx)))?;
        sum += measure.evaluate(&e);
    }
    Ok(sum / voxels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Robustness {
    Robust,
    Fragile,
}

impl Robustness {
    /// 1 for fragile, 0 for robust.
    pub fn class_index(self) -> usize {
        match self {
            Robustness::Robust => 0,
            Robustness::Fragile => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessLabel {
    pub label: Robustness,
    pub e_eff: f64,
    pub threshold: f64,
}

/// Fragile iff `e_eff > threshold`; a value equal to the threshold is
/// robust.
pub fn label(e_eff: f64, threshold: f64) -> Result<RobustnessLabel> {
    if !(e_eff.is_finite() && e_eff >= 0.0) {
        return Err(StrainError::NegativeStrain(e_eff));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(StrainError::Threshold(threshold));
    }
    let label = if e_eff > threshold {
        Robustness::Fragile
    } else {
        Robustness::Robust
    };
    Ok(RobustnessLabel {
        label,
        e_eff,
        threshold,
    })
}

/// One line of a cohort label manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub id: String,
    pub e_eff: f64,
    pub threshold: f64,
    pub label: Robustness,
}

impl LabelRecord {
    pub fn new(id: impl Into<String>, l: &RobustnessLabel) -> Self {
        Self {
            id: id.into(),
            e_eff: l.e_eff,
            threshold: l.threshold,
            label: l.label,
        }
    }
}
