//! Raw little-endian voxel files with JSON sidecars.
//!
//! `<stem>.raw` holds the voxels in grid index order; `<stem>.json` holds
//! `{dims, spacing_mm, label_names, bmo_points}`. Displacement files store
//! three `f32` per voxel (x, y, z) and add the channel count, the rigid
//! translation and the name of a `u8` LC-mask file next to them.

use std::fs;
use std::path::{Path, PathBuf};

use onh_geometry::{Point, Tissue};
use serde::{Deserialize, Serialize};

use crate::error::{PhantomError, Result};
use crate::grid::VolumeGrid;
use crate::volume::{DisplacementField, SegmentedVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub label_names: Vec<String>,
    pub bmo_points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid_translation_mm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lc_mask_file: Option<String>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| PhantomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| PhantomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_sidecar(path: &Path, s: &Sidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(s).map_err(|source| PhantomError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write(path, text.as_bytes())
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    serde_json::from_slice(&read(path)?).map_err(|source| PhantomError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn label_names() -> Vec<String> {
    Tissue::ALL.iter().map(|t| t.name().to_string()).collect()
}

fn sidecar(grid: &VolumeGrid, bmo: &[Point]) -> Sidecar {
    Sidecar {
        dims: grid.dims,
        spacing_mm: grid.spacing_mm,
        label_names: label_names(),
        bmo_points: bmo.iter().map(|p| [p.x, p.y, p.z]).collect(),
        dtype: None,
        channels: None,
        rigid_translation_mm: None,
        lc_mask_file: None,
    }
}

/// Writes `<stem>.raw` and `<stem>.json`.
pub fn write_volume(stem: &Path, v: &SegmentedVolume) -> Result<()> {
    write(&with_ext(stem, ".raw"), &v.labels)?;
    let mut s = sidecar(&v.grid, &v.bmo_points);
    s.dtype = Some("u8".into());
    write_sidecar(&with_ext(stem, ".json"), &s)
}

pub fn read_volume(stem: &Path) -> Result<SegmentedVolume> {
    let s = read_sidecar(&with_ext(stem, ".json"))?;
    let grid = VolumeGrid {
        dims: s.dims,
        spacing_mm: s.spacing_mm,
    };
    let labels = read(&with_ext(stem, ".raw"))?;
    let bmo = s.bmo_points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect();
    SegmentedVolume::new(grid, labels, bmo)
}

/// Writes `<stem>.raw` (f32), `<stem>.lcmask.raw` (u8) and `<stem>.json`.
/// The BMO points of the owning volume go into the sidecar.
pub fn write_displacement(stem: &Path, f: &DisplacementField, bmo_points: &[Point]) -> Result<()> {
    let mut bytes = Vec::with_capacity(f.u.len() * 12);
    for v in &f.u {
        for c in v {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    write(&with_ext(stem, ".raw"), &bytes)?;
    let mask_path = with_ext(stem, ".lcmask.raw");
    let mask: Vec<u8> = f.lc_mask.iter().map(|&m| m as u8).collect();
    write(&mask_path, &mask)?;
    let mut s = sidecar(&f.grid, bmo_points);
    s.dtype = Some("f32".into());
    s.channels = Some(3);
    s.rigid_translation_mm = Some(f.rigid_translation_mm);
    s.lc_mask_file = mask_path.file_name().map(|n| n.to_string_lossy().into_owned());
    write_sidecar(&with_ext(stem, ".json"), &s)
}

pub fn read_displacement(stem: &Path) -> Result<DisplacementField> {
    let json = with_ext(stem, ".json");
    let s = read_sidecar(&json)?;
    if s.channels != Some(3) || s.dtype.as_deref() != Some("f32") {
        return Err(PhantomError::Format(format!(
            "{}: expected a 3-channel f32 displacement sidecar",
            json.display()
        )));
    }
    let grid = VolumeGrid {
        dims: s.dims,
        spacing_mm: s.spacing_mm,
    };
    grid.validate()?;
    let raw = read(&with_ext(stem, ".raw"))?;
    if raw.len() != grid.len() * 12 {
        return Err(PhantomError::Format(format!(
            "displacement file has {} bytes, expected {}",
            raw.len(),
            grid.len() * 12
        )));
    }
    let u = raw
        .chunks_exact(12)
        .map(|c| {
            let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]) as f64;
            [f(0), f(4), f(8)]
        })
        .collect();
    let mask_name = s
        .lc_mask_file
        .ok_or_else(|| PhantomError::Format(format!("{}: no lc_mask_file", json.display())))?;
    let mask_path = json.parent().unwrap_or(Path::new(".")).join(mask_name);
    let mask = read(&mask_path)?.into_iter().map(|b| b != 0).collect();
    DisplacementField::new(grid, u, mask, s.rigid_translation_mm.unwrap_or([0.0; 3]))
}
