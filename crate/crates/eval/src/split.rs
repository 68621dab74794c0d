use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Train, validation and test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EvalError::Fractions(f));
        }
        Ok(())
    }
}

/// Partition of every sample, aligned with the input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    /// Test fold index for cross-validation splits.
    pub fold: Option<usize>,
    pub partitions: Vec<Partition>,
}

impl SplitAssignment {
    pub fn indices(&self, part: Partition) -> Vec<usize> {
        (0..self.partitions.len()).filter(|&i| self.partitions[i] == part).collect()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.partitions.iter().filter(|&&p| p == part).count()
    }
}

fn check(ids: &[String], labels: &[usize], min_per_class: usize) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(EvalError::Length {
            ids: ids.len(),
            labels: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::Label(l));
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(EvalError::DuplicateId(id.clone()));
        }
    }
    for label in 0..2 {
        let count = labels.iter().filter(|&&l| l == label).count();
        if count < min_per_class {
            return Err(EvalError::ClassTooSmall {
                label,
                count,
                needed: min_per_class,
            });
        }
    }
    Ok(())
}

/// Each class's indices sorted by id, then shuffled. Depends only on the
/// (id, label) pairs and the seed, never on input order.
fn shuffled_classes(ids: &[String], labels: &[usize], seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [0, 1].map(|label| {
        let mut members: Vec<usize> = (0..ids.len()).filter(|&i| labels[i] == label).collect();
        members.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        members.shuffle(&mut rng);
        members
    })
}

/// Merges the classes by relative position `(rank + 0.5) / class_size`, so
/// every prefix is stratified to within one sample per class.
fn interleave(classes: &[Vec<usize>; 2]) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize, usize)> = Vec::new();
    for (label, members) in classes.iter().enumerate() {
        let n = members.len() as f64;
        keyed.extend(members.iter().enumerate().map(|(rank, &i)| ((rank as f64 + 0.5) / n, label, i)));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|k| k.2).collect()
}

/// Stratified train/validation/test split. Validation and test sizes are
/// `round(fraction * n)`; training takes the rest.
pub fn split(ids: &[String], labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    fractions.validate()?;
    check(ids, labels, 3)?;
    let n = ids.len();
    let n_test = (fractions.test * n as f64).round() as usize;
    let n_val = (fractions.val * n as f64).round() as usize;
    let mut partitions = vec![Partition::Train; n];
    for (pos, i) in interleave(&shuffled_classes(ids, labels, seed)).into_iter().enumerate() {
        partitions[i] = if pos < n_test {
            Partition::Test
        } else if pos < n_test + n_val {
            Partition::Val
        } else {
            Partition::Train
        };
    }
    Ok(SplitAssignment {
        seed,
        fold: None,
        partitions,
    })
}

/// Stratified k-fold assignment. The shuffled classes are laid end to end
/// and dealt round-robin, so fold sizes and per-fold class counts each differ
/// by at most one. Each fold's remainder is split into train and validation
/// in the ratio `fractions.train : fractions.val`, validation taken from the
/// front of the class-interleaved order.
pub fn kfold(
    ids: &[String],
    labels: &[usize],
    folds: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<Vec<SplitAssignment>> {
    fractions.validate()?;
    if folds < 2 || ids.len() < folds {
        return Err(EvalError::TooFew {
            n: ids.len(),
            parts: folds,
        });
    }
    check(ids, labels, folds)?;
    let classes = shuffled_classes(ids, labels, seed);
    let mut fold_of = vec![0; ids.len()];
    for (pos, &i) in classes.iter().flatten().enumerate() {
        fold_of[i] = pos % folds;
    }
    let order = interleave(&classes);
    let val_share = fractions.val / (fractions.train + fractions.val);
    Ok((0..folds)
        .map(|f| {
            let mut partitions = vec![Partition::Train; ids.len()];
            let mut rest = Vec::new();
            for &i in &order {
                if fold_of[i] == f {
                    partitions[i] = Partition::Test;
                } else {
                    rest.push(i);
                }
            }
            let n_val = (val_share * rest.len() as f64).round() as usize;
            for &i in &rest[..n_val] {
                partitions[i] = Partition::Val;
            }
            SplitAssignment {
                seed,
                fold: Some(f),
                partitions,
            }
        })
        .collect())
}
