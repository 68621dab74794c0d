//! Point-cloud files: CSV (`x_mm,y_mm,z_mm,thickness_mm,tissue_id`) and ASCII
//! PLY for external viewers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{GeometryError, Result};
use crate::{OnhPointCloud, Point, Tissue};

pub const CLOUD_HEADER: &str = "x_mm,y_mm,z_mm,thickness_mm,tissue_id";

pub fn write_cloud_csv(path: &Path, cloud: &OnhPointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CLOUD_HEADER}")?;
    for ((p, t), tissue) in cloud.positions.iter().zip(&cloud.thickness).zip(&cloud.tissue) {
        writeln!(w, "{},{},{},{},{}", p.x, p.y, p.z, t, tissue.id())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cloud written by [`write_cloud_csv`]. The canonical flag is not
/// stored in the file and comes back unset.
pub fn read_cloud_csv(path: &Path) -> Result<OnhPointCloud> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CLOUD_HEADER {
        return Err(GeometryError::Parse(format!(
            "unexpected header `{}`, expected `{CLOUD_HEADER}`",
            header.join(",")
        )));
    }
    let mut positions = Vec::new();
    let mut thickness = Vec::new();
    let mut tissue = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| GeometryError::Parse(format!("row {}: bad column {i}", line + 2)))
        };
        positions.push(Point::new(num(0)?, num(1)?, num(2)?));
        thickness.push(num(3)?);
        let id: u8 = rec
            .get(4)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| GeometryError::Parse(format!("row {}: bad tissue_id", line + 2)))?;
        tissue.push(Tissue::from_id(id).ok_or_else(|| GeometryError::Parse(format!("row {}: tissue_id {id}", line + 2)))?);
    }
    OnhPointCloud::new(positions, thickness, tissue, false)
}

/// ASCII PLY with one float scalar property per vertex.
pub fn write_ply(path: &Path, positions: &[Point], scalar_name: &str, scalars: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", positions.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "property float {scalar_name}")?;
    writeln!(w, "end_header")?;
    for (p, s) in positions.iter().zip(scalars) {
        writeln!(w, "{} {} {} {}", p.x, p.y, p.z, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cloud_ply(path: &Path, cloud: &OnhPointCloud) -> Result<()> {
    write_ply(path, &cloud.positions, "thickness", &cloud.thickness)
}
