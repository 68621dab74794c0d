use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// Descending; `thresholds[i]` produces `curve[i]` by predicting
    /// positive when `score >= threshold`. The first is `+inf`.
    pub thresholds: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub auc: f64,
}

/// ROC over every distinct score. Tied scores move the curve diagonally,
/// which is the same as half credit per tied positive/negative pair.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length {
            ids: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(s));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::Label(l));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut curve = vec![CurvePoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut twice_area = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in integer units of 1 / (2 * pos * neg).
        twice_area += (fp - fp0) * (tp + tp0);
        thresholds.push(s);
        curve.push(CurvePoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocResult {
        thresholds,
        curve,
        auc: twice_area as f64 / (2 * pos * neg) as f64,
    })
}

/// TPR of a piecewise-linear ROC curve at `fpr`; on a vertical segment the
/// highest TPR wins.
pub fn interpolate_tpr(curve: &[CurvePoint], fpr: f64) -> f64 {
    let mut best: f64 = 0.0;
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if fpr < a.fpr || fpr > b.fpr {
            continue;
        }
        let t = if b.fpr > a.fpr {
            a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
        } else {
            b.tpr.max(a.tpr)
        };
        best = best.max(t);
    }
    best
}

/// Arithmetic mean and sample (n - 1) standard deviation.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(v));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
