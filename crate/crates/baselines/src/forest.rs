use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BaselineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per node; `None` means `round(sqrt(features))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training rows per class (robust, fragile) that reached the leaf.
    Leaf { counts: [usize; 2] },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn leaf_for(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { counts } => return *counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Leaf majority class; ties go to robust (0).
    pub fn predict(&self, x: &[f64]) -> usize {
        let [robust, fragile] = self.leaf_for(x);
        usize::from(fragile > robust)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Gini impurity from class counts.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// `gini(parent) - weighted gini(children)`, evaluated from counts so any
/// caller computing it the same way gets the same bits.
pub fn gini_gain(left: [usize; 2], right: [usize; 2]) -> f64 {
    let parent = [left[0] + right[0], left[1] + right[1]];
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    gini(parent) - (nl / n) * gini(left) - (nr / n) * gini(right)
}

fn class_counts(rows: &[usize], y: &[usize]) -> [usize; 2] {
    let mut c = [0, 0];
    for &r in rows {
        c[y[r]] += 1;
    }
    c
}

/// Best Gini split of `rows` over `features`, trying midpoints between
/// consecutive distinct values. The first candidate with the largest gain
/// wins, in the given feature order and then by increasing threshold.
pub fn best_split(x: &[Vec<f64>], y: &[usize], rows: &[usize], features: &[usize]) -> Option<Split> {
    let total = class_counts(rows, y);
    let mut best: Option<Split> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for &f in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize, 0];
        for i in 0..sorted.len() - 1 {
            left[sorted[i].1] += 1;
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let gain = gini_gain(left, right);
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn check_data(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(BaselineError::Shape(format!("{} rows and {} labels (need >= 2)", x.len(), y.len())));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(BaselineError::Shape("rows must share a nonzero width".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(BaselineError::Shape("features must be finite".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(BaselineError::Label(bad));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(BaselineError::SingleClass);
    }
    Ok(p)
}

fn grow_tree(x: &[Vec<f64>], y: &[usize], rows: Vec<usize>, mtry: usize, min_split: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    let p = x[0].len();
    let mut nodes = vec![TreeNode::Leaf { counts: [0, 0] }];
    let mut stack = vec![(0usize, rows)];
    let mut pool: Vec<usize> = (0..p).collect();
    while let Some((id, rows)) = stack.pop() {
        let counts = class_counts(&rows, y);
        let pure = counts[0] == 0 || counts[1] == 0;
        let split = if pure || rows.len() < min_split {
            None
        } else {
            let features: Vec<usize> = if mtry >= p {
                (0..p).collect()
            } else {
                // Partial Fisher-Yates: the first `mtry` slots become the draw.
                for i in 0..mtry {
                    let j = rng.random_range(i..p);
                    pool.swap(i, j);
                }
                pool[..mtry].to_vec()
            };
            best_split(x, y, &rows, &features)
        };
        match split {
            None => nodes[id] = TreeNode::Leaf { counts },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
                let (left, right) = (nodes.len(), nodes.len() + 1);
                nodes.push(TreeNode::Leaf { counts: [0, 0] });
                nodes.push(TreeNode::Leaf { counts: [0, 0] });
                nodes[id] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                // Right first so the left subtree is grown (and numbered) first.
                stack.push((right, r));
                stack.push((left, l));
            }
        }
    }
    DecisionTree { nodes }
}

/// CART trees on Gini impurity, each on its own bootstrap sample drawn from
/// an independent random stream, so the forest depends only on the data and
/// `cfg`.
pub fn train_random_forest(x: &[Vec<f64>], y: &[usize], cfg: &ForestConfig) -> Result<RandomForest> {
    let p = check_data(x, y)?;
    if cfg.n_trees == 0 {
        return Err(BaselineError::Config("n_trees must be >= 1".into()));
    }
    if cfg.max_features == Some(0) {
        return Err(BaselineError::Config("max_features must be >= 1".into()));
    }
    let mtry = cfg.max_features.unwrap_or_else(|| ((p as f64).sqrt().round() as usize).max(1)).min(p);
    let m = x.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..m).map(|_| rng.random_range(0..m)).collect()
            } else {
                (0..m).collect()
            };
            grow_tree(x, y, rows, mtry, cfg.min_samples_split.max(2), &mut rng)
        })
        .collect();
    Ok(RandomForest {
        config: cfg.clone(),
        n_features: p,
        trees,
    })
}

/// Fraction of trees whose leaf majority is fragile.
pub fn rf_predict(forest: &RandomForest, x: &[f64]) -> Result<f64> {
    if x.len() != forest.n_features {
        return Err(BaselineError::Shape(format!(
            "{} features, forest expects {}",
            x.len(),
            forest.n_features
        )));
    }
    let votes: usize = forest.trees.iter().map(|t| t.predict(x)).sum();
    Ok(votes as f64 / forest.trees.len() as f64)
}

impl RandomForest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|source| BaselineError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, json).map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| BaselineError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
