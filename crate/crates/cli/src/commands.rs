use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use onh_baselines::extract_structural_parameters;
use onh_dgcnn::{annulus_mass_fraction, critical_density_map, PooledCriticalPoints, DENSITY_RADIUS_MM};
use onh_eval::{interpolate_tpr, read_metrics_jsonl, MetricRecord, Summary};
use onh_geometry::io::{write_cloud_csv, write_cloud_ply, write_ply};
use onh_geometry::{canonicalize, extract_point_cloud, fit_bmo_plane, Point};
use onh_phantom::{generate_member, sample_cohort, CohortConfig, VolumeGrid};
use onh_strain::{label, lc_average_effective_strain, LabelRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{read_json, read_jsonl, write_csv, write_json, write_manifest, CriticalRecord, DensityRow};
use crate::config::{ExperimentConfig, MethodsConfig};
use crate::dataset::{member_id, run_pool};
use crate::experiment::{run_experiment, CRITICAL, METRICS, SUMMARY};
use crate::phantom_dir::{find_entry, read_cohort, read_field, read_member, write_member, CohortFile, COHORT};
use crate::{invalid, CliResult};

fn json_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

/// Refuses to write into a non-empty directory, so stale files never mix
/// with a new run.
fn fresh_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() && fs::read_dir(dir).map_err(anyhow::Error::from)?.next().is_some() {
        return Err(invalid(format!("output directory {} is not empty", dir.display())));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn require_dir(dir: &Path, what: &str) -> CliResult<()> {
    if !dir.is_dir() {
        return Err(invalid(format!("{what} {} does not exist", dir.display())));
    }
    Ok(())
}

fn check_jobs(jobs: usize) -> CliResult<()> {
    if jobs == 0 {
        return Err(invalid("--jobs must be >= 1"));
    }
    Ok(())
}

pub struct GenerateArgs {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub fragile_fraction: Option<f64>,
    pub config: Option<PathBuf>,
    pub full_resolution: bool,
    pub out: PathBuf,
    pub jobs: usize,
}

pub fn phantom_generate(a: &GenerateArgs) -> CliResult<()> {
    check_jobs(a.jobs)?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize::<_, CohortConfig>(de)
                .map_err(|e| invalid(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())))?
        }
        None => CohortConfig {
            n: a.n.ok_or_else(|| invalid("--n is required without --config"))?,
            seed: a.seed.ok_or_else(|| invalid("--seed is required without --config"))?,
            ..CohortConfig::default()
        },
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.fragile_fraction {
        cfg.target_fragile_fraction = f;
    }
    if a.full_resolution {
        cfg.grid = VolumeGrid::full();
    }
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    fresh_dir(&a.out)?;
    let entries = sample_cohort(&cfg).map_err(anyhow::Error::from)?;
    run_pool(a.jobs, || {
        entries.par_iter().try_for_each(|e| {
            let m = generate_member(e, &cfg.coupling)?;
            write_member(&a.out, &m)
        })
    })??;
    let file = CohortFile {
        config: cfg.clone(),
        entries,
    };
    write_json(&a.out.join(COHORT), &file)?;
    write_manifest(&a.out, "phantom generate", &json_hash(&cfg), cfg.seed)?;
    Ok(())
}

pub fn extract_pointcloud(
    phantom: &Path,
    id: &str,
    n: usize,
    scan_frame: bool,
    ply: bool,
    out: &Path,
) -> CliResult<()> {
    require_dir(phantom, "phantom directory")?;
    if n == 0 {
        return Err(invalid("--n must be >= 1"));
    }
    let cohort = read_cohort(phantom).map_err(|e| invalid(e.to_string()))?;
    let entry = find_entry(&cohort, id).ok_or_else(|| invalid(format!("no member `{id}` in {}", phantom.display())))?;
    fresh_dir(out)?;
    let m = read_member(phantom, entry)?;
    let raw = extract_point_cloud(&m.surfaces, n, entry.seed).map_err(anyhow::Error::from)?;
    let cloud = if scan_frame {
        raw
    } else {
        canonicalize(&raw, &fit_bmo_plane(&m.volume.bmo_points).map_err(anyhow::Error::from)?)
    };
    let name = member_id(entry.id);
    write_cloud_csv(&out.join(format!("{name}.csv")), &cloud).map_err(anyhow::Error::from)?;
    if ply {
        write_cloud_ply(&out.join(format!("{name}.ply")), &cloud).map_err(anyhow::Error::from)?;
    }
    let options = serde_json::json!({"id": name, "n": n, "scan_frame": scan_frame});
    write_manifest(out, "extract pointcloud", &json_hash(&options), entry.seed)?;
    Ok(())
}

pub fn extract_params(phantom: &Path, out: &Path) -> CliResult<()> {
    require_dir(phantom, "phantom directory")?;
    let cohort = read_cohort(phantom).map_err(|e| invalid(e.to_string()))?;
    fresh_dir(out)?;
    let mut csv = onh_baselines::csv_header();
    csv.push('\n');
    for e in &cohort.entries {
        let m = read_member(phantom, e)?;
        let plane = fit_bmo_plane(&m.volume.bmo_points).map_err(anyhow::Error::from)?;
        let v = extract_structural_parameters(&m.volume, &m.surfaces, &plane)
            .with_context(|| format!("structural parameters of {}", member_id(e.id)))?;
        csv.push_str(&v.csv_row(&member_id(e.id)));
        csv.push('\n');
    }
    fs::write(out.join("structural_params.csv"), csv).context("writing structural_params.csv")?;
    write_manifest(out, "extract params", &json_hash(&cohort.config), cohort.config.seed)?;
    Ok(())
}

pub fn label_strain(phantom: &Path, threshold: f64, out: &Path) -> CliResult<()> {
    require_dir(phantom, "phantom directory")?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(invalid("--threshold must be finite and > 0"));
    }
    let cohort = read_cohort(phantom).map_err(|e| invalid(e.to_string()))?;
    fresh_dir(out)?;
    let mut rows = Vec::new();
    for e in &cohort.entries {
        let field = read_field(phantom, e)?;
        let strain = lc_average_effective_strain(&field).with_context(|| format!("strain of {}", member_id(e.id)))?;
        rows.push(LabelRecord::new(member_id(e.id), &label(strain, threshold).map_err(anyhow::Error::from)?));
    }
    write_csv(&out.join("labels.csv"), &rows)?;
    let options = serde_json::json!({"cohort": json_hash(&cohort.config), "threshold": threshold});
    write_manifest(out, "label strain", &json_hash(&options), cohort.config.seed)?;
    Ok(())
}

fn load_config(path: &Path, out: Option<&Path>, jobs: Option<usize>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    if let Some(j) = jobs {
        check_jobs(j)?;
        cfg.jobs = j;
    }
    Ok(cfg)
}

pub fn eval(config: &Path, out: Option<&Path>, jobs: Option<usize>) -> CliResult<Summary> {
    let cfg = load_config(config, out, jobs)?;
    fresh_dir(&cfg.output_dir)?;
    Ok(run_experiment(&cfg, &cfg.output_dir, "eval")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dgcnn,
    Rf,
    Ae,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dgcnn => "dgcnn",
            Method::Rf => "rf",
            Method::Ae => "ae",
        }
    }
}

/// Trains one method on a single stratified train/val/test split of the
/// configured cohort and scores it on the test part.
pub fn train(method: Method, config: &Path, out: Option<&Path>, jobs: Option<usize>) -> CliResult<Summary> {
    let mut cfg = load_config(config, out, jobs)?;
    let m = &cfg.methods;
    let only = match method {
        Method::Dgcnn => MethodsConfig {
            dgcnn: m.dgcnn.clone(),
            ..MethodsConfig::default()
        },
        Method::Rf => MethodsConfig {
            rf: m.rf.clone(),
            ..MethodsConfig::default()
        },
        Method::Ae => MethodsConfig {
            ae: m.ae.clone(),
            ..MethodsConfig::default()
        },
    };
    if only.enabled().is_empty() {
        return Err(invalid(format!(
            "config field `methods.{}`: required by `train {}`",
            method.name(),
            method.name()
        )));
    }
    cfg.methods = only;
    fresh_dir(&cfg.output_dir)?;
    Ok(crate::experiment::run_single_split(&cfg, &cfg.output_dir, &format!("train {}", method.name()))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalSummary {
    pub fold: Option<usize>,
    pub onhs: usize,
    pub pooled_points: usize,
    pub max_critical_set: usize,
    pub radius_mm: f64,
    pub annulus: [f64; 2],
    /// Share of density mass within `annulus * r_bmo` of the canal axis.
    pub annulus_mass_fraction: Option<f64>,
}

pub fn critical_points(run: &Path, fold: Option<usize>, radius: f64, ply: bool, out: Option<&Path>) -> CliResult<CriticalSummary> {
    require_dir(run, "run directory")?;
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(invalid("--radius must be finite and >= 0"));
    }
    let path = run.join(CRITICAL);
    if !path.is_file() {
        return Err(invalid(format!("{} not found; was DGCNN enabled?", path.display())));
    }
    let records: Vec<CriticalRecord> = read_jsonl(&path)?;
    let records: Vec<&CriticalRecord> = records.iter().filter(|r| fold.map_or(true, |f| r.fold == f)).collect();
    if records.is_empty() {
        return Err(invalid(format!("no critical points for fold {fold:?}")));
    }
    let out = out.map_or_else(|| run.join("critical_points"), Path::to_path_buf);
    fresh_dir(&out)?;
    let mut pooled = PooledCriticalPoints {
        points: Vec::new(),
        source: Vec::new(),
    };
    for (onh, r) in records.iter().enumerate() {
        for p in &r.points {
            pooled.points.push(Point::new(p[0], p[1], p[2]));
            pooled.source.push(onh);
        }
    }
    let counts = critical_density_map(&pooled.points, radius).map_err(anyhow::Error::from)?;
    let (lo, hi) = (0.7, 1.5);
    let fraction = annulus_mass_fraction(&pooled, &counts, |o| records[o].r_bmo_mm, lo, hi);
    let rows: Vec<DensityRow> = pooled
        .points
        .iter()
        .zip(&counts)
        .map(|(p, &count)| DensityRow {
            x_mm: p.x,
            y_mm: p.y,
            z_mm: p.z,
            count,
        })
        .collect();
    write_csv(&out.join("critical_density.csv"), &rows)?;
    if ply {
        let scalars: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        write_ply(&out.join("critical_density.ply"), &pooled.points, "count", &scalars).map_err(anyhow::Error::from)?;
    }
    let summary = CriticalSummary {
        fold,
        onhs: records.len(),
        pooled_points: pooled.points.len(),
        max_critical_set: records.iter().map(|r| r.indices.len()).max().unwrap_or(0),
        radius_mm: radius,
        annulus: [lo, hi],
        annulus_mass_fraction: fraction,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let run_manifest = crate::artifacts::read_manifest(run).ok();
    let options = serde_json::json!({"fold": fold, "radius": radius});
    write_manifest(
        &out,
        "critical-points",
        &json_hash(&options),
        run_manifest.map_or(0, |m| m.seed),
    )?;
    Ok(summary)
}

pub fn default_radius() -> f64 {
    DENSITY_RADIUS_MM
}

#[derive(Debug, Serialize)]
struct RocRow<'a> {
    method: &'a str,
    fold: usize,
    fpr: f64,
    tpr: f64,
}

#[derive(Debug, Serialize)]
struct MeanRocRow<'a> {
    method: &'a str,
    fpr: f64,
    mean_tpr: f64,
    std_tpr: f64,
}

/// Grid of the mean ROC curve.
pub const ROC_GRID: usize = 101;

pub fn render_table(summary: &Summary, records: &[MetricRecord]) -> String {
    let mut s = String::new();
    let folds = records.iter().map(|r| r.fold + 1).max().unwrap_or(0);
    let _ = write!(s, "{:<8} {:>8} {:>8}", "method", "mean", "std");
    for f in 0..folds {
        let _ = write!(s, " {:>7}", format!("fold{f}"));
    }
    s.push('\n');
    for (name, m) in &summary.methods {
        let _ = write!(s, "{:<8} {:>8.4} {:>8.4}", name, m.mean, m.std);
        for f in 0..folds {
            match records.iter().find(|r| &r.method == name && r.fold == f) {
                Some(r) => {
                    let _ = write!(s, " {:>7.4}", r.auc);
                }
                None => {
                    let _ = write!(s, " {:>7}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

pub fn report(run: &Path, out: Option<&Path>) -> CliResult<String> {
    require_dir(run, "run directory")?;
    let metrics = run.join(METRICS);
    if !metrics.is_file() {
        return Err(invalid(format!("{} not found", metrics.display())));
    }
    let records = read_metrics_jsonl(&metrics).map_err(anyhow::Error::from)?;
    let summary: Summary = read_json(&run.join(SUMMARY))?;
    let out = out.map_or_else(|| run.join("report"), Path::to_path_buf);
    fresh_dir(&out)?;
    let table = render_table(&summary, &records);
    fs::write(out.join("table.txt"), &table).context("writing table.txt")?;

    let mut roc = Vec::new();
    for r in &records {
        for p in &r.curve {
            roc.push(RocRow {
                method: &r.method,
                fold: r.fold,
                fpr: p.fpr,
                tpr: p.tpr,
            });
        }
    }
    write_csv(&out.join("roc_points.csv"), &roc)?;

    let mut mean = Vec::new();
    for name in summary.methods.keys() {
        let curves: Vec<&MetricRecord> = records.iter().filter(|r| &r.method == name).collect();
        for g in 0..ROC_GRID {
            let fpr = g as f64 / (ROC_GRID - 1) as f64;
            let tprs: Vec<f64> = curves.iter().map(|r| interpolate_tpr(&r.curve, fpr)).collect();
            let (mean_tpr, std_tpr) = onh_eval::aggregate(&tprs).unwrap_or((tprs[0], 0.0));
            mean.push(MeanRocRow {
                method: name,
                fpr,
                mean_tpr,
                std_tpr,
            });
        }
    }
    write_csv(&out.join("mean_roc.csv"), &mean)?;
    let seed = crate::artifacts::read_manifest(run).map_or(0, |m| m.seed);
    write_manifest(&out, "report", &json_hash(&summary), seed)?;
    Ok(table)
}
