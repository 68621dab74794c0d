//! Weight files: a little-endian `f64` blob plus a JSON manifest naming every
//! array, its shape and its offset in the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{AutodiffError, Result};
use crate::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format: String,
    pub entries: Vec<WeightEntry>,
    pub seed: u64,
    pub config_hash: String,
    /// Free-form metadata owned by the model (config, training summary).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_weights(
    stem: &Path,
    params: &ParamSet,
    seed: u64,
    config_hash: &str,
    extra: serde_json::Value,
) -> Result<WeightManifest> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, arr) in params {
        entries.push(WeightEntry {
            name: name.clone(),
            shape: arr.shape().to_vec(),
            offset,
        });
        blob.extend_from_slice(&arr.to_le_bytes());
        offset += arr.len();
    }
    let manifest = WeightManifest {
        format: "f64-le".to_string(),
        entries,
        seed,
        config_hash: config_hash.to_string(),
        extra,
    };
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(stem.with_extension("bin"), &blob)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| AutodiffError::Manifest(e.to_string()))?;
    fs::write(stem.with_extension("json"), json)?;
    Ok(manifest)
}

pub fn load_weights(stem: &Path) -> Result<(ParamSet, WeightManifest)> {
    let json = fs::read_to_string(stem.with_extension("json"))?;
    let manifest: WeightManifest =
        serde_json::from_str(&json).map_err(|e| AutodiffError::Manifest(e.to_string()))?;
    if manifest.format != "f64-le" {
        return Err(AutodiffError::Manifest(format!("unknown format `{}`", manifest.format)));
    }
    let blob = fs::read(stem.with_extension("bin"))?;
    if blob.len() % 8 != 0 {
        return Err(AutodiffError::Manifest("blob length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut params = ParamSet::new();
    for e in &manifest.entries {
        let n: usize = e.shape.iter().product();
        let slice = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| AutodiffError::Manifest(format!("entry `{}` runs past the blob", e.name)))?;
        params.insert(e.name.clone(), DenseArray::new(e.shape.clone(), slice.to_vec())?);
    }
    Ok((params, manifest))
}
