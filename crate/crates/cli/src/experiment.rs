//! Cross-validated comparison of the three classifiers on one synthetic
//! cohort.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use onh_baselines::{
    ae_classify, csv_header, rf_predict, train_ae_classifier, train_autoencoder, train_random_forest,
    AutoencoderModel, SectionRaster,
};
use onh_dgcnn::{forward, train as train_dgcnn, EpochRecord, LabeledCloud};
use onh_eval::{kfold, roc_auc, split, summarize, write_metrics_jsonl, MetricRecord, Partition, SplitAssignment, Summary};
use onh_phantom::CohortConfig;
use onh_strain::LabelRecord;
use rayon::prelude::*;

use crate::artifacts::{write_csv, write_json, write_jsonl, write_manifest, CriticalRecord, PredictionRow};
use crate::config::ExperimentConfig;
use crate::dataset::{build_dataset, pretraining_sections, run_pool, Sample};

pub const METRICS: &str = "metrics.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const CRITICAL: &str = "critical_points.jsonl";

/// Progress lines go to stderr so that no artifact depends on timing.
fn progress(msg: impl AsRef<str>) {
    eprintln!("[onh] {}", msg.as_ref());
}

#[derive(Debug, Default)]
struct FoldOutput {
    records: Vec<MetricRecord>,
    predictions: Vec<PredictionRow>,
    critical: Vec<CriticalRecord>,
    history: Vec<EpochRecord>,
}

fn raster(cfg: &ExperimentConfig) -> SectionRaster {
    cfg.methods.ae.as_ref().map(|a| a.model.raster).unwrap_or_default()
}

fn labeled(samples: &[Sample], idx: &[usize]) -> Vec<LabeledCloud> {
    idx.iter()
        .map(|&i| LabeledCloud {
            cloud: samples[i].cloud.clone(),
            label: samples[i].class(),
        })
        .collect()
}

fn record(
    method: &str,
    fold: usize,
    samples: &[Sample],
    test: &[usize],
    scores: Vec<f64>,
    out: &mut FoldOutput,
) -> Result<()> {
    let labels: Vec<usize> = test.iter().map(|&i| samples[i].class()).collect();
    let roc = roc_auc(&scores, &labels).with_context(|| format!("{method} fold {fold}: ROC"))?;
    for (&i, &score) in test.iter().zip(&scores) {
        out.predictions.push(PredictionRow {
            method: method.into(),
            fold,
            id: samples[i].id.clone(),
            label: samples[i].class(),
            score,
        });
    }
    out.records.push(MetricRecord {
        method: method.into(),
        fold,
        auc: roc.auc,
        curve: roc.curve,
    });
    Ok(())
}

fn run_fold(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    split: &SplitAssignment,
    encoder: Option<&AutoencoderModel>,
    models_dir: &Path,
) -> Result<FoldOutput> {
    let fold = split.fold.unwrap_or(0);
    let fold_start = Instant::now();
    let train = split.indices(Partition::Train);
    let val = split.indices(Partition::Val);
    let test = split.indices(Partition::Test);
    let dir = models_dir.join(format!("fold{fold}"));
    fs::create_dir_all(&dir)?;
    let mut out = FoldOutput::default();

    if let Some(dcfg) = &cfg.methods.dgcnn {
        let start = Instant::now();
        let mut dcfg = dcfg.clone();
        dcfg.seed = dcfg.seed.wrapping_add(fold as u64);
        let outcome = train_dgcnn(&labeled(samples, &train), &labeled(samples, &val), &dcfg)
            .with_context(|| format!("dgcnn fold {fold}"))?;
        outcome.model.save(&dir.join("dgcnn"))?;
        let mut scores = Vec::with_capacity(test.len());
        for &i in &test {
            let s = &samples[i];
            let p = forward(&s.cloud, &outcome.model)?;
            scores.push(p.fragile_probability());
            out.critical.push(CriticalRecord {
                fold,
                id: s.id.clone(),
                label: s.class(),
                r_bmo_mm: s.r_bmo,
                points: p.critical.indices.iter().map(|&j| s.cloud.positions[j].into()).collect(),
                indices: p.critical.indices,
            });
        }
        record("dgcnn", fold, samples, &test, scores, &mut out)?;
        out.history = outcome.history;
        progress(format!("fold {fold}: dgcnn done in {:.2}s", start.elapsed().as_secs_f64()));
    }

    if let Some(rcfg) = &cfg.methods.rf {
        let mut rcfg = rcfg.clone();
        rcfg.seed = rcfg.seed.wrapping_add(fold as u64);
        let x: Vec<Vec<f64>> = train.iter().map(|&i| samples[i].structural.to_vec()).collect();
        let y: Vec<usize> = train.iter().map(|&i| samples[i].class()).collect();
        let forest = train_random_forest(&x, &y, &rcfg).with_context(|| format!("rf fold {fold}"))?;
        forest.save(&dir.join("rf.json"))?;
        let scores = test
            .iter()
            .map(|&i| rf_predict(&forest, &samples[i].structural.to_vec()))
            .collect::<onh_baselines::Result<Vec<_>>>()?;
        record("rf", fold, samples, &test, scores, &mut out)?;
    }

    if let Some(encoder) = encoder {
        let pairs = |idx: &[usize]| -> Vec<(&[u8], usize)> {
            idx.iter().map(|&i| (samples[i].section.as_slice(), samples[i].class())).collect()
        };
        let model = train_ae_classifier(encoder, &pairs(&train), &pairs(&val))
            .with_context(|| format!("ae fold {fold}"))?;
        model.save(&dir.join("ae"))?;
        let scores = test
            .iter()
            .map(|&i| ae_classify(&model, &samples[i].section))
            .collect::<onh_baselines::Result<Vec<_>>>()?;
        record("ae", fold, samples, &test, scores, &mut out)?;
    }
    progress(format!("fold {fold} finished in {:.2}s", fold_start.elapsed().as_secs_f64()));
    Ok(out)
}

pub fn write_dataset_tables(out_dir: &Path, samples: &[Sample]) -> Result<()> {
    let labels: Vec<LabelRecord> = samples.iter().map(|s| LabelRecord::new(s.id.clone(), &s.label)).collect();
    write_csv(&out_dir.join("labels.csv"), &labels)?;
    let mut params = csv_header();
    params.push('\n');
    for s in samples {
        params.push_str(&s.structural.csv_row(&s.id));
        params.push('\n');
    }
    fs::write(out_dir.join("structural_params.csv"), params)?;
    let entries: Vec<_> = samples.iter().map(|s| &s.entry).collect();
    write_json(&out_dir.join("cohort.json"), &entries)
}

fn prepare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<Sample>, Option<AutoencoderModel>)> {
    if out_dir.exists() && fs::read_dir(out_dir)?.next().is_some() {
        bail!("output directory {} is not empty", out_dir.display());
    }
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let samples = run_pool(cfg.jobs, || build_dataset(&cfg.cohort, cfg.points, cfg.strain_threshold, raster(cfg)))??;
    let fragile = samples.iter().filter(|s| s.class() == 1).count();
    progress(format!(
        "cohort of {} ({fragile} fragile) ready after {:.2}s",
        samples.len(),
        started.elapsed().as_secs_f64()
    ));
    write_json(&out_dir.join("config.json"), cfg)?;
    write_dataset_tables(out_dir, &samples)?;
    fs::create_dir_all(out_dir.join("models"))?;
    let encoder = match &cfg.methods.ae {
        Some(ae) => {
            let start = Instant::now();
            let pre = CohortConfig {
                n: ae.pretrain_n,
                seed: ae.pretrain_seed,
                ..cfg.cohort.clone()
            };
            let sections = run_pool(cfg.jobs, || pretraining_sections(&pre, ae.model.raster))??;
            let refs: Vec<&[u8]> = sections.iter().map(Vec::as_slice).collect();
            let (model, losses) = train_autoencoder(&refs, &ae.model).context("autoencoder pretraining")?;
            model.save(&out_dir.join("models").join("ae_pretrained"))?;
            write_json(&out_dir.join("models").join("ae_pretrain_loss.json"), &losses)?;
            progress(format!("autoencoder pretrained in {:.2}s", start.elapsed().as_secs_f64()));
            Some(model)
        }
        None => None,
    };
    Ok((samples, encoder))
}

fn finish(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    command: &str,
    samples: &[Sample],
    splits: &[SplitAssignment],
    encoder: Option<&AutoencoderModel>,
) -> Result<Summary> {
    let started = Instant::now();
    write_json(&out_dir.join("splits.json"), splits)?;
    let models_dir = out_dir.join("models");
    let folds = run_pool(cfg.jobs, || {
        splits
            .par_iter()
            .map(|s| run_fold(cfg, samples, s, encoder, &models_dir))
            .collect::<Result<Vec<_>>>()
    })??;

    let history_dir = out_dir.join("history");
    fs::create_dir_all(&history_dir)?;
    let mut records = Vec::new();
    let mut predictions = Vec::new();
    let mut critical = Vec::new();
    for (f, out) in folds.into_iter().enumerate() {
        if !out.history.is_empty() {
            write_jsonl(&history_dir.join(format!("dgcnn_fold{f}.jsonl")), &out.history)?;
        }
        records.extend(out.records);
        predictions.extend(out.predictions);
        critical.extend(out.critical);
    }
    records.sort_by(|a, b| (a.method.as_str(), a.fold).cmp(&(b.method.as_str(), b.fold)));
    write_metrics_jsonl(&out_dir.join(METRICS), &records)?;
    let summary = if records.len() > records.iter().map(|r| &r.method).collect::<std::collections::BTreeSet<_>>().len() {
        summarize(&records)?
    } else {
        // One split: the spread over folds is undefined.
        Summary {
            methods: records
                .iter()
                .map(|r| (r.method.clone(), onh_eval::MethodSummary { mean: r.auc, std: 0.0, folds: 1 }))
                .collect(),
        }
    };
    write_json(&out_dir.join(SUMMARY), &summary)?;
    write_csv(&out_dir.join(PREDICTIONS), &predictions)?;
    if !critical.is_empty() {
        write_jsonl(&out_dir.join(CRITICAL), &critical)?;
    }
    write_manifest(out_dir, command, &cfg.hash(), cfg.cohort.seed)?;
    for (name, m) in &summary.methods {
        progress(format!("{name}: AUC {:.3} ± {:.3} over {} folds", m.mean, m.std, m.folds));
    }
    progress(format!("training and scoring took {:.2}s", started.elapsed().as_secs_f64()));
    Ok(summary)
}

fn ids_and_labels(samples: &[Sample]) -> (Vec<String>, Vec<usize>) {
    (samples.iter().map(|s| s.id.clone()).collect(), samples.iter().map(Sample::class).collect())
}

/// Stratified k-fold cross-validation into `out_dir`, which must be empty
/// or absent.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, command: &str) -> Result<Summary> {
    let (samples, encoder) = prepare(cfg, out_dir)?;
    let (ids, labels) = ids_and_labels(&samples);
    let splits = kfold(&ids, &labels, cfg.cv.folds, cfg.cv.fractions, cfg.cv.seed)?;
    finish(cfg, out_dir, command, &samples, &splits, encoder.as_ref())
}

/// One stratified train/val/test split instead of cross-validation.
pub fn run_single_split(cfg: &ExperimentConfig, out_dir: &Path, command: &str) -> Result<Summary> {
    let (samples, encoder) = prepare(cfg, out_dir)?;
    let (ids, labels) = ids_and_labels(&samples);
    let s = split(&ids, &labels, cfg.cv.fractions, cfg.cv.seed)?;
    finish(cfg, out_dir, command, &samples, &[s], encoder.as_ref())
}
