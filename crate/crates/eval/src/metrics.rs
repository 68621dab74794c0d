use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::roc::{aggregate, CurvePoint};
use crate::{EvalError, Result};

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub fold: usize,
    pub auc: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean: f64,
    pub std: f64,
    pub folds: usize,
}

/// Per-method mean and sample standard deviation of the fold AUCs, keyed and
/// serialized in method-name order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: BTreeMap<String, MethodSummary>,
}

pub fn summarize(records: &[MetricRecord]) -> Result<Summary> {
    let mut by_method: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        by_method.entry(&r.method).or_default().push((r.fold, r.auc));
    }
    let mut methods = BTreeMap::new();
    for (name, mut aucs) in by_method {
        // Fixed reduction order whatever order the folds finished in.
        aucs.sort_by_key(|a| a.0);
        let values: Vec<f64> = aucs.iter().map(|a| a.1).collect();
        let (mean, std) = aggregate(&values)?;
        methods.insert(
            name.to_string(),
            MethodSummary {
                mean,
                std,
                folds: values.len(),
            },
        );
    }
    Ok(Summary { methods })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> EvalError + '_ {
    move |source| EvalError::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_metrics_jsonl(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(json_err(path))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(json_err(path)))
        .collect()
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(json_err(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}
