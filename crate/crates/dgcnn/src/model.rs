use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use onh_autodiff::{
    load_weights, save_weights, DenseArray, Evaluation, Graph, NeighborFn, NodeId, Op, ParamSet,
};
use onh_geometry::{knn_all, OnhPointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DgcnnConfig, FirstLayerMetric, NUM_CLASSES};
use crate::error::{DgcnnError, Result};

pub(crate) const POINTS: &str = "points";
pub(crate) const TARGET: &str = "target";

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 over the training and validation features and labels.
    pub data_hash: String,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub epochs_run: usize,
}

/// Multipliers applied to the raw features. A single spatial factor keeps
/// the metric isotropic, so first-layer neighbor sets are unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    pub spatial: f64,
    pub thickness: f64,
}

impl Default for InputScale {
    fn default() -> Self {
        Self {
            spatial: 1.0,
            thickness: 1.0,
        }
    }
}

impl InputScale {
    /// Reciprocal RMS of the coordinates (per axis) and of the thickness
    /// channel over every point; a zero RMS leaves that factor at 1.
    pub fn fit<'a>(clouds: impl IntoIterator<Item = &'a OnhPointCloud>) -> Self {
        let (mut sxyz, mut st, mut n) = (0.0, 0.0, 0usize);
        for c in clouds {
            for (p, t) in c.positions.iter().zip(&c.thickness) {
                sxyz += p.x * p.x + p.y * p.y + p.z * p.z;
                st += t * t;
            }
            n += c.len();
        }
        let inv = |sum: f64, count: f64| {
            let rms = (sum / count).sqrt();
            if rms > 0.0 && rms.is_finite() {
                1.0 / rms
            } else {
                1.0
            }
        };
        if n == 0 {
            return Self::default();
        }
        Self {
            spatial: inv(sxyz, 3.0 * n as f64),
            thickness: inv(st, n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgcnnModel {
    pub config: DgcnnConfig,
    params: ParamSet,
    pub input_scale: InputScale,
    pub manifest: Option<TrainingManifest>,
}

/// Input points that attain the global max pool. `channel_argmax[c]` is the
/// winning point for pooled channel `c`; `indices` is their sorted, distinct
/// union. Removing non-critical points does NOT in general preserve the
/// output, because the EdgeConv neighbor graphs change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub indices: Vec<usize>,
    pub channel_argmax: Vec<usize>,
}

impl CriticalPointSet {
    pub fn from_argmax(channel_argmax: Vec<usize>) -> Self {
        let mut indices = channel_argmax.clone();
        indices.sort_unstable();
        indices.dedup();
        Self {
            indices,
            channel_argmax,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Class order: robust, fragile.
    pub logits: [f64; NUM_CLASSES],
    pub critical: CriticalPointSet,
}

impl Prediction {
    /// Softmax probability of the fragile class.
    pub fn fragile_probability(&self) -> f64 {
        let [a, b] = self.logits;
        1.0 / (1.0 + (a - b).exp())
    }

    pub fn class(&self) -> usize {
        usize::from(self.logits[1] > self.logits[0])
    }
}

/// Weights of one EdgeConv layer. Rows `0..C` of `w` act on `x_i`, rows
/// `C..2C` on `x_j - x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConvWeights {
    pub w: DenseArray,
    pub b: DenseArray,
}

pub(crate) fn knn_selector() -> NeighborFn {
    Arc::new(|metric: &DenseArray, k: usize| {
        let dim = metric.shape()[1];
        knn_all(metric.data(), dim, k).map_err(|e| e.to_string())
    })
}

/// Adds one EdgeConv layer. Since `W [x_i, x_j - x_i] + b` splits into
/// `(W_top - W_bot) x_i + b` plus `W_bot x_j`, the neighbor max runs over the
/// per-point term `W_bot x_j` and LeakyReLU commutes with it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn edgeconv_nodes(
    g: &mut Graph,
    x: NodeId,
    c_in: usize,
    w: NodeId,
    b: NodeId,
    k: usize,
    slope: f64,
    metric_cols: Option<(usize, usize)>,
) -> NodeId {
    let top = g.add(Op::SliceRows {
        input: w,
        start: 0,
        end: c_in,
    });
    let bot = g.add(Op::SliceRows {
        input: w,
        start: c_in,
        end: 2 * c_in,
    });
    let center = g.add(Op::Sub(top, bot));
    let a = g.add(Op::MatMul(x, center));
    let a = g.add(Op::AddRowBias(a, b));
    let bj = g.add(Op::MatMul(x, bot));
    let m = g.add(Op::NeighborMax {
        metric: x,
        metric_cols,
        values: bj,
        k,
        select: knn_selector(),
    });
    let s = g.add(Op::Add(a, m));
    g.add(Op::LeakyRelu(s, slope))
}

/// One EdgeConv layer with neighbors taken in the full input feature space.
pub fn edgeconv_forward(
    features: &DenseArray,
    k: usize,
    weights: &EdgeConvWeights,
    slope: f64,
) -> Result<DenseArray> {
    let (n, c) = features.as_matrix_dims().ok_or_else(|| {
        DgcnnError::Config(format!("features {:?} are not N x C", features.shape()))
    })?;
    if k >= n {
        return Err(DgcnnError::TooFewPoints { k, n });
    }
    match weights.w.as_matrix_dims() {
        Some((rows, _)) if rows == 2 * c => {}
        _ => {
            return Err(DgcnnError::Weights(format!(
                "edge weights {:?} need {} rows",
                weights.w.shape(),
                2 * c
            )))
        }
    }
    let mut g = Graph::new();
    let x = g.input("x");
    let w = g.input("w");
    let b = g.input("b");
    let out = edgeconv_nodes(&mut g, x, c, w, b, k, slope, None);
    let inputs = BTreeMap::from([
        ("x".to_string(), features.clone()),
        ("w".to_string(), weights.w.clone()),
        ("b".to_string(), weights.b.clone()),
    ]);
    let eval = g.forward(&inputs)?;
    Ok(eval.value(out).clone())
}

pub(crate) struct Network {
    pub graph: Graph,
    pub logits: NodeId,
    pub pool: NodeId,
    pub loss: Option<NodeId>,
}

/// Builds the classifier graph. `dropout_masks`, one per hidden head layer,
/// are multiplied into the activations (training only).
pub(crate) fn build_network(
    cfg: &DgcnnConfig,
    with_loss: bool,
    dropout_masks: Option<Vec<DenseArray>>,
) -> Network {
    let mut g = Graph::new();
    let points = g.input(POINTS);
    let mut x = points;
    let mut stages = Vec::with_capacity(cfg.edge_channels.len());
    for (l, &c_in) in cfg.edge_inputs().iter().enumerate() {
        let w = g.input(&format!("edge{l}.w"));
        let b = g.input(&format!("edge{l}.b"));
        let metric_cols = match (l, cfg.first_layer_metric) {
            (0, FirstLayerMetric::Spatial) => Some((0, 3)),
            _ => None,
        };
        x = edgeconv_nodes(&mut g, x, c_in, w, b, cfg.k, cfg.leaky_slope, metric_cols);
        stages.push(x);
    }
    let cat = g.add(Op::ConcatCols(stages));
    let aw = g.input("agg.w");
    let ab = g.input("agg.b");
    let h = g.add(Op::MatMul(cat, aw));
    let h = g.add(Op::AddRowBias(h, ab));
    let h = g.add(Op::LeakyRelu(h, cfg.leaky_slope));
    let pool = g.add_named("global_pool", Op::MaxRows(h));
    let mut h = pool;
    let last = cfg.head_widths.len() - 1;
    let mut masks = dropout_masks.map(|m| m.into_iter());
    for i in 0..=last {
        let w = g.input(&format!("head{i}.w"));
        let b = g.input(&format!("head{i}.b"));
        h = g.add(Op::MatMul(h, w));
        h = g.add(Op::AddRowBias(h, b));
        if i < last {
            h = g.add(Op::LeakyRelu(h, cfg.leaky_slope));
            if let Some(mask) = masks.as_mut().and_then(|m| m.next()) {
                let c = g.add(Op::Const(mask));
                h = g.add(Op::Mul(h, c));
            }
        }
    }
    let logits = h;
    let loss = with_loss.then(|| {
        let t = g.input(TARGET);
        g.add_named("loss", Op::SoftmaxCrossEntropy { logits, targets: t })
    });
    Network {
        graph: g,
        logits,
        pool,
        loss,
    }
}

/// Expected `(name, shape)` of every weight array.
pub(crate) fn param_shapes(cfg: &DgcnnConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (l, (&c_in, &c_out)) in cfg.edge_inputs().iter().zip(&cfg.edge_channels).enumerate() {
        out.push((format!("edge{l}.w"), vec![2 * c_in, c_out]));
        out.push((format!("edge{l}.b"), vec![c_out]));
    }
    let concat: usize = cfg.edge_channels.iter().sum();
    out.push(("agg.w".into(), vec![concat, cfg.aggregation_width]));
    out.push(("agg.b".into(), vec![cfg.aggregation_width]));
    let mut prev = cfg.aggregation_width;
    for (i, &w) in cfg.head_widths.iter().enumerate() {
        out.push((format!("head{i}.w"), vec![prev, w]));
        out.push((format!("head{i}.b"), vec![w]));
        prev = w;
    }
    out
}

impl DgcnnModel {
    /// He-uniform weights (LeakyReLU gain) and zero biases, drawn from
    /// `config.seed`.
    pub fn new(config: DgcnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for (name, shape) in param_shapes(&config) {
            let arr = if shape.len() == 2 {
                let bound = (6.0 / ((1.0 + config.leaky_slope.powi(2)) * shape[0] as f64)).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                DenseArray::new(shape, data)?
            } else {
                DenseArray::zeros(&shape)
            };
            params.insert(name, arr);
        }
        Ok(Self {
            config,
            params,
            input_scale: InputScale::default(),
            manifest: None,
        })
    }

    pub fn from_params(config: DgcnnConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(DgcnnError::Weights(format!(
                "expected {} arrays, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                Some(a) if a.shape() == shape.as_slice() => {}
                Some(a) => {
                    return Err(DgcnnError::Weights(format!(
                        "{name} has shape {:?}, expected {shape:?}",
                        a.shape()
                    )))
                }
                None => return Err(DgcnnError::Weights(format!("missing {name}"))),
            }
        }
        Ok(Self {
            config,
            params,
            input_scale: InputScale::default(),
            manifest: None,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub(crate) fn set_params(&mut self, params: ParamSet) {
        self.params = params;
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let extra = serde_json::json!({
            "config": self.config,
            "manifest": self.manifest,
            "input_scale": self.input_scale,
        });
        save_weights(
            stem,
            &self.params,
            self.config.seed,
            &self.config.hash(),
            extra,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (params, manifest) = load_weights(stem)?;
        let config: DgcnnConfig = serde_json::from_value(manifest.extra["config"].clone())?;
        if config.hash() != manifest.config_hash {
            return Err(DgcnnError::Weights(
                "config hash does not match the stored config".into(),
            ));
        }
        let training: Option<TrainingManifest> =
            serde_json::from_value(manifest.extra["manifest"].clone())?;
        let mut model = Self::from_params(config, params)?;
        model.manifest = training;
        model.input_scale = serde_json::from_value(manifest.extra["input_scale"].clone())?;
        Ok(model)
    }
}

pub(crate) fn feature_matrix(cloud: &OnhPointCloud, model: &DgcnnModel) -> Result<DenseArray> {
    let cfg = &model.config;
    if !cloud.canonical {
        return Err(DgcnnError::NotCanonical);
    }
    let n = cloud.len();
    if n <= cfg.k {
        return Err(DgcnnError::TooFewPoints { k: cfg.k, n });
    }
    if cfg.input_channels != 4 {
        return Err(DgcnnError::Channels {
            got: 4,
            expected: cfg.input_channels,
        });
    }
    let InputScale { spatial, thickness } = model.input_scale;
    let mut data = cloud.features();
    for row in data.chunks_exact_mut(4) {
        row[0] *= spatial;
        row[1] *= spatial;
        row[2] *= spatial;
        row[3] *= thickness;
    }
    Ok(DenseArray::matrix(n, 4, data)?)
}

pub(crate) fn bind(
    params: &ParamSet,
    features: DenseArray,
    target: Option<usize>,
) -> BTreeMap<String, DenseArray> {
    let mut inputs = params.clone();
    inputs.insert(POINTS.to_string(), features);
    if let Some(t) = target {
        inputs.insert(
            TARGET.to_string(),
            DenseArray::vector(vec![t as f64]).expect("1-vector"),
        );
    }
    inputs
}

pub(crate) fn read_prediction(net: &Network, eval: &Evaluation<'_>) -> Prediction {
    let l = eval.value(net.logits).data();
    let argmax = eval
        .argmax_rows(net.pool)
        .expect("global pool is a MaxRows node")
        .to_vec();
    Prediction {
        logits: [l[0], l[1]],
        critical: CriticalPointSet::from_argmax(argmax),
    }
}

/// Classifies a canonical cloud and records its critical points.
pub fn forward(cloud: &OnhPointCloud, model: &DgcnnModel) -> Result<Prediction> {
    let features = feature_matrix(cloud, model)?;
    forward_features(features, model)
}

/// [`forward`] on a raw `N x C` feature matrix, skipping the frame check and
/// the input scaling.
pub fn forward_features(features: DenseArray, model: &DgcnnModel) -> Result<Prediction> {
    let net = build_network(&model.config, false, None);
    let inputs = bind(&model.params, features, None);
    let eval = net.graph.forward(&inputs)?;
    Ok(read_prediction(&net, &eval))
}

/// Scalar loss graph for gradient checks: mean cross-entropy of one cloud.
pub fn loss_and_gradients(
    features: DenseArray,
    target: usize,
    model: &DgcnnModel,
) -> Result<(f64, ParamSet)> {
    let (loss, grads, _) = loss_gradients_prediction(features, target, model, None)?;
    Ok((loss, grads))
}

pub(crate) fn loss_gradients_prediction(
    features: DenseArray,
    target: usize,
    model: &DgcnnModel,
    dropout_masks: Option<Vec<DenseArray>>,
) -> Result<(f64, ParamSet, Prediction)> {
    if target >= NUM_CLASSES {
        return Err(DgcnnError::Label(target));
    }
    let net = build_network(&model.config, true, dropout_masks);
    let inputs = bind(&model.params, features, Some(target));
    let eval = net.graph.forward(&inputs)?;
    let loss_node = net.loss.expect("built with loss");
    let loss = eval.value(loss_node).data()[0];
    let mut grads = eval.gradients(loss_node)?;
    grads.retain(|name, _| model.params.contains_key(name));
    Ok((loss, grads, read_prediction(&net, &eval)))
}
