//! Evaluation harness: stratified train/validation/test splits, k-fold
//! cross-validation, ROC curves with trapezoidal AUC, mean ± sample standard
//! deviation, and JSON-lines metric records.

mod metrics;
mod roc;
mod split;

pub use metrics::{
    read_metrics_jsonl, summarize, write_metrics_jsonl, write_summary, MethodSummary, MetricRecord, Summary,
};
pub use roc::{aggregate, interpolate_tpr, roc_auc, CurvePoint, RocResult};
pub use split::{kfold, split, Partition, SplitAssignment, SplitFractions, DEFAULT_FOLDS};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{ids} ids but {labels} labels")]
    Length { ids: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    Label(usize),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("class {label} has {count} samples; stratifying needs at least {needed}")]
    ClassTooSmall { label: usize, count: usize, needed: usize },
    #[error("{n} samples cannot be split {parts} ways")]
    TooFew { n: usize, parts: usize },
    #[error("fractions {0:?} must be positive and sum to 1")]
    Fractions([f64; 3]),
    #[error("ROC needs both classes")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("aggregate needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;
