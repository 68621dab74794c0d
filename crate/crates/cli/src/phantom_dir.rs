//! On-disk layout of a generated cohort:
//!
//! ```text
//! cohort.json                  {config, entries}
//! <id>/volume.{raw,json}       labelled voxels
//! <id>/displacement.{raw,lcmask.raw,json}
//! <id>/surfaces.csv            tissue_id,role,x_mm,y_mm,z_mm
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use onh_geometry::{BoundaryRole, BoundarySurface, Point, Tissue};
use onh_phantom::io::{read_displacement, read_volume, write_displacement, write_volume};
use onh_phantom::{CohortConfig, CohortEntry, CohortMember, DisplacementField, SegmentedVolume};
use serde::{Deserialize, Serialize};

use crate::dataset::member_id;

pub const COHORT: &str = "cohort.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFile {
    pub config: CohortConfig,
    pub entries: Vec<CohortEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceRow {
    tissue_id: u8,
    role: BoundaryRole,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
}

pub fn member_dir(root: &Path, id: usize) -> PathBuf {
    root.join(member_id(id))
}

pub fn write_surfaces(path: &Path, surfaces: &[BoundarySurface]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for s in surfaces {
        for p in &s.points {
            w.serialize(SurfaceRow {
                tissue_id: s.tissue.id(),
                role: s.role,
                x_mm: p.x,
                y_mm: p.y,
                z_mm: p.z,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Surfaces in order of first appearance in the file.
pub fn read_surfaces(path: &Path) -> Result<Vec<BoundarySurface>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut order: Vec<(u8, BoundaryRole)> = Vec::new();
    let mut points: BTreeMap<(u8, bool), Vec<Point>> = BTreeMap::new();
    for (i, row) in r.deserialize::<SurfaceRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        let key = (row.tissue_id, row.role == BoundaryRole::Anterior);
        if !points.contains_key(&key) {
            order.push((row.tissue_id, row.role));
        }
        points.entry(key).or_default().push(Point::new(row.x_mm, row.y_mm, row.z_mm));
    }
    order
        .into_iter()
        .map(|(t, role)| {
            let tissue = Tissue::from_id(t).with_context(|| format!("{}: unknown tissue id {t}", path.display()))?;
            let pts = points.remove(&(t, role == BoundaryRole::Anterior)).unwrap_or_default();
            Ok(BoundarySurface::new(tissue, role, pts)?)
        })
        .collect()
}

pub fn write_member(root: &Path, m: &CohortMember) -> Result<()> {
    let dir = member_dir(root, m.entry.id);
    fs::create_dir_all(&dir)?;
    write_volume(&dir.join("volume"), &m.volume)?;
    write_displacement(&dir.join("displacement"), &m.field, &m.volume.bmo_points)?;
    write_surfaces(&dir.join("surfaces.csv"), &m.surfaces)
}

pub fn read_cohort(root: &Path) -> Result<CohortFile> {
    let path = root.join(COHORT);
    if !path.is_file() {
        bail!("{} is not a phantom directory (no {COHORT})", root.display());
    }
    crate::artifacts::read_json(&path)
}

pub struct StoredMember {
    pub entry: CohortEntry,
    pub volume: SegmentedVolume,
    pub surfaces: Vec<BoundarySurface>,
}

pub fn read_member(root: &Path, entry: &CohortEntry) -> Result<StoredMember> {
    let dir = member_dir(root, entry.id);
    Ok(StoredMember {
        entry: entry.clone(),
        volume: read_volume(&dir.join("volume")).with_context(|| format!("reading {}", dir.display()))?,
        surfaces: read_surfaces(&dir.join("surfaces.csv"))?,
    })
}

pub fn read_field(root: &Path, entry: &CohortEntry) -> Result<DisplacementField> {
    let dir = member_dir(root, entry.id);
    read_displacement(&dir.join("displacement")).with_context(|| format!("reading {}", dir.display()))
}

/// Finds an entry by index (`3`) or directory name (`onh_0003`).
pub fn find_entry<'a>(cohort: &'a CohortFile, id: &str) -> Option<&'a CohortEntry> {
    cohort
        .entries
        .iter()
        .find(|e| member_id(e.id) == id || id.parse::<usize>().is_ok_and(|n| n == e.id))
}
