use std::collections::BTreeMap;
use std::path::Path;

use onh_autodiff::{load_weights, save_weights, Adam, AdamConfig, DenseArray, Graph, NodeId, Op, ParamSet};
use onh_geometry::Tissue;
use onh_phantom::SegmentedVolume;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BaselineError, Result};

pub const SECTION_CLASSES: usize = Tissue::ALL.len();

/// Downsampled B-scan raster: `width` A-scans by `height` depth samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionRaster {
    pub width: usize,
    pub height: usize,
}

impl Default for SectionRaster {
    fn default() -> Self {
        Self { width: 64, height: 96 }
    }
}

impl SectionRaster {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Tissue labels of the B-scan nearest the BMO centre, nearest-neighbor
/// resampled to `raster`, row-major by A-scan.
pub fn central_section(volume: &SegmentedVolume, raster: SectionRaster) -> Result<Vec<u8>> {
    if raster.width == 0 || raster.height == 0 {
        return Err(BaselineError::Config("raster must be nonempty".into()));
    }
    let [_, n1, n2] = volume.grid.dims;
    let slice = volume.bscan(volume.central_bscan());
    let mut out = Vec::with_capacity(raster.pixels());
    for r in 0..raster.width {
        let j = ((r as f64 + 0.5) * n1 as f64 / raster.width as f64) as usize;
        for c in 0..raster.height {
            let k = ((c as f64 + 0.5) * n2 as f64 / raster.height as f64) as usize;
            out.push(slice[j.min(n1 - 1) * n2 + k.min(n2 - 1)]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![32],
            epochs: 300,
            batch_size: 8,
            learning_rate: 1e-3,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub raster: SectionRaster,
    pub latent_width: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            raster: SectionRaster::default(),
            latent_width: 64,
            hidden_widths: Vec::new(),
            leaky_slope: 0.2,
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            classifier: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.classifier;
        if self.raster.pixels() == 0 || self.latent_width == 0 || self.hidden_widths.contains(&0) {
            return Err(BaselineError::Config("raster and layer widths must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || c.epochs == 0 || c.batch_size == 0 {
            return Err(BaselineError::Config("epochs and batch sizes must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && c.learning_rate > 0.0) || c.hidden_widths.contains(&0) {
            return Err(BaselineError::Config("learning rates and widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(BaselineError::Config(format!("leaky_slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn input_width(&self) -> usize {
        self.raster.pixels() * SECTION_CLASSES
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = self.hidden_widths.clone();
        w.push(self.latent_width);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub config: AutoencoderConfig,
    /// `enc{i}.*` and `dec{i}.*` arrays.
    pub params: ParamSet,
    /// `cls{i}.*` arrays once the classifier head is trained.
    pub classifier: Option<ParamSet>,
    pub encoder_trained: bool,
}

fn he_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, slope: f64) -> DenseArray {
    let bound = (6.0 / ((1.0 + slope * slope) * rows as f64)).sqrt();
    DenseArray::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()).expect("shape")
}

fn dense_layers(g: &mut Graph, mut h: NodeId, prefix: &str, count: usize, slope: f64, last_linear: bool) -> NodeId {
    for i in 0..count {
        let w = g.input(&format!("{prefix}{i}.w"));
        let b = g.input(&format!("{prefix}{i}.b"));
        h = g.add(Op::MatMul(h, w));
        h = g.add(Op::AddRowBias(h, b));
        if !(last_linear && i + 1 == count) {
            h = g.add(Op::LeakyRelu(h, slope));
        }
    }
    h
}

fn check_sections(sections: &[&[u8]], raster: SectionRaster) -> Result<()> {
    for s in sections {
        if s.len() != raster.pixels() {
            return Err(BaselineError::Shape(format!(
                "section has {} pixels, raster needs {}",
                s.len(),
                raster.pixels()
            )));
        }
        if let Some(&bad) = s.iter().find(|&&l| l as usize >= SECTION_CLASSES) {
            return Err(BaselineError::Shape(format!("pixel label {bad} is not a tissue class")));
        }
    }
    Ok(())
}

fn one_hot(sections: &[&[u8]], raster: SectionRaster) -> DenseArray {
    let width = raster.pixels() * SECTION_CLASSES;
    let mut data = vec![0.0; sections.len() * width];
    for (b, s) in sections.iter().enumerate() {
        for (p, &l) in s.iter().enumerate() {
            data[b * width + p * SECTION_CLASSES + l as usize] = 1.0;
        }
    }
    DenseArray::matrix(sections.len(), width, data).expect("shape")
}

impl AutoencoderModel {
    pub fn new(config: AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let enc = config.encoder_widths();
        let mut prev = config.input_width();
        for (i, &w) in enc.iter().enumerate() {
            params.insert(format!("enc{i}.w"), he_uniform(&mut rng, prev, w, config.leaky_slope));
            params.insert(format!("enc{i}.b"), DenseArray::zeros(&[w]));
            prev = w;
        }
        let mut dec: Vec<usize> = config.hidden_widths.iter().rev().copied().collect();
        dec.push(config.input_width());
        for (i, &w) in dec.iter().enumerate() {
            params.insert(format!("dec{i}.w"), he_uniform(&mut rng, prev, w, config.leaky_slope));
            params.insert(format!("dec{i}.b"), DenseArray::zeros(&[w]));
            prev = w;
        }
        Ok(Self {
            config,
            params,
            classifier: None,
            encoder_trained: false,
        })
    }

    /// Writes `<stem>.bin` and `<stem>.json`; the classifier head, when
    /// present, is stored alongside the autoencoder arrays.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut all = self.params.clone();
        if let Some(head) = &self.classifier {
            all.extend(head.iter().map(|(n, a)| (n.clone(), a.clone())));
        }
        let extra = serde_json::json!({
            "config": self.config,
            "encoder_trained": self.encoder_trained,
            "encoder_hash": self.encoder_hash(),
        });
        save_weights(stem, &all, self.config.seed, &self.config.hash(), extra)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (mut all, manifest) = load_weights(stem)?;
        let config: AutoencoderConfig = serde_json::from_value(manifest.extra["config"].clone())
            .map_err(|e| BaselineError::Shape(format!("stored autoencoder config: {e}")))?;
        if config.hash() != manifest.config_hash {
            return Err(BaselineError::Shape("config hash does not match the stored config".into()));
        }
        let head: ParamSet = all
            .iter()
            .filter(|(n, _)| n.starts_with("cls"))
            .map(|(n, a)| (n.clone(), a.clone()))
            .collect();
        all.retain(|n, _| !n.starts_with("cls"));
        let mut model = Self::new(config)?;
        for (name, arr) in &model.params {
            match all.get(name) {
                Some(a) if a.shape() == arr.shape() => {}
                _ => return Err(BaselineError::Shape(format!("stored weights lack a matching {name}"))),
            }
        }
        if all.len() != model.params.len() {
            return Err(BaselineError::Shape("stored weights have extra arrays".into()));
        }
        model.params = all;
        model.classifier = (!head.is_empty()).then_some(head);
        model.encoder_trained = manifest.extra["encoder_trained"].as_bool().unwrap_or(false);
        Ok(model)
    }

    fn encoder_depth(&self) -> usize {
        self.config.hidden_widths.len() + 1
    }

    /// SHA-256 over the encoder arrays; unchanged by classifier training.
    pub fn encoder_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, arr) in self.params.iter().filter(|(n, _)| n.starts_with("enc")) {
            h.update(name.as_bytes());
            h.update(arr.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn encoder_inputs(&self) -> BTreeMap<String, DenseArray> {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with("enc"))
            .map(|(n, a)| (n.clone(), a.clone()))
            .collect()
    }

    /// Latent codes, one row per section.
    pub fn encode(&self, sections: &[&[u8]]) -> Result<DenseArray> {
        check_sections(sections, self.config.raster)?;
        if sections.is_empty() {
            return Err(BaselineError::Empty("sections"));
        }
        let mut g = Graph::new();
        let x = g.add(Op::Const(one_hot(sections, self.config.raster)));
        let z = dense_layers(&mut g, x, "enc", self.encoder_depth(), self.config.leaky_slope, true);
        let inputs = self.encoder_inputs();
        let eval = g.forward(&inputs)?;
        Ok(eval.value(z).clone())
    }

    /// Most likely tissue per pixel after a round trip through the latent code.
    pub fn reconstruct(&self, section: &[u8]) -> Result<Vec<u8>> {
        let net = reconstruction_graph(&self.config, &[section], false);
        let eval = net.0.forward(&self.params)?;
        let logits = eval.value(net.1).data();
        Ok(logits
            .chunks_exact(SECTION_CLASSES)
            .map(|px| {
                let mut best = 0;
                for c in 1..SECTION_CLASSES {
                    if px[c] > px[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect())
    }
}

/// Returns the graph and its output node: per-pixel logits `[B * P, classes]`
/// or, with `with_loss`, the mean per-pixel cross-entropy.
fn reconstruction_graph(cfg: &AutoencoderConfig, sections: &[&[u8]], with_loss: bool) -> (Graph, NodeId) {
    let mut g = Graph::new();
    let x = g.add(Op::Const(one_hot(sections, cfg.raster)));
    let z = dense_layers(&mut g, x, "enc", cfg.hidden_widths.len() + 1, cfg.leaky_slope, true);
    let out = dense_layers(&mut g, z, "dec", cfg.hidden_widths.len() + 1, cfg.leaky_slope, true);
    let logits = g.add(Op::Reshape {
        input: out,
        shape: vec![sections.len() * cfg.raster.pixels(), SECTION_CLASSES],
    });
    if !with_loss {
        return (g, logits);
    }
    let targets: Vec<f64> = sections.iter().flat_map(|s| s.iter().map(|&l| l as f64)).collect();
    let t = g.add(Op::Const(DenseArray::vector(targets).expect("targets")));
    let loss = g.add(Op::SoftmaxCrossEntropy { logits, targets: t });
    (g, loss)
}

/// Unsupervised training on one-hot sections; returns the model and the mean
/// training loss of each epoch.
pub fn train_autoencoder(sections: &[&[u8]], cfg: &AutoencoderConfig) -> Result<(AutoencoderModel, Vec<f64>)> {
    cfg.validate()?;
    if sections.is_empty() {
        return Err(BaselineError::Empty("sections"));
    }
    check_sections(sections, cfg.raster)?;
    let mut model = AutoencoderModel::new(cfg.clone())?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..sections.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let chunk: Vec<&[u8]> = batch.iter().map(|&i| sections[i]).collect();
            let (g, loss) = reconstruction_graph(cfg, &chunk, true);
            let eval = g.forward(&model.params)?;
            let value = eval.value(loss).data()[0];
            if !value.is_finite() {
                return Err(BaselineError::Diverged { epoch });
            }
            total += value * chunk.len() as f64;
            let grads = eval.gradients(loss)?;
            drop(eval);
            adam.step(&mut model.params, &grads)?;
        }
        history.push(total / sections.len() as f64);
    }
    model.encoder_trained = true;
    Ok((model, history))
}

fn classifier_graph(cfg: &AutoencoderConfig, latents: DenseArray, targets: Option<Vec<f64>>) -> (Graph, NodeId) {
    let mut g = Graph::new();
    let x = g.add(Op::Const(latents));
    let depth = cfg.classifier.hidden_widths.len() + 1;
    let logits = dense_layers(&mut g, x, "cls", depth, cfg.leaky_slope, true);
    match targets {
        None => (g, logits),
        Some(t) => {
            let t = g.add(Op::Const(DenseArray::vector(t).expect("targets")));
            let loss = g.add(Op::SoftmaxCrossEntropy { logits, targets: t });
            (g, loss)
        }
    }
}

fn fragile_probabilities(cfg: &AutoencoderConfig, head: &ParamSet, latents: DenseArray) -> Result<Vec<f64>> {
    let (g, logits) = classifier_graph(cfg, latents, None);
    let eval = g.forward(head)?;
    Ok(eval
        .value(logits)
        .data()
        .chunks_exact(2)
        .map(|l| 1.0 / (1.0 + (l[0] - l[1]).exp()))
        .collect())
}

fn mean_loss(cfg: &AutoencoderConfig, head: &ParamSet, latents: &DenseArray, labels: &[usize]) -> Result<f64> {
    let (g, loss) = classifier_graph(cfg, latents.clone(), Some(labels.iter().map(|&l| l as f64).collect()));
    Ok(g.forward(head)?.value(loss).data()[0])
}

fn rows(a: &DenseArray, idx: &[usize]) -> DenseArray {
    let c = a.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(&a.data()[i * c..(i + 1) * c]);
    }
    DenseArray::matrix(idx.len(), c, data).expect("shape")
}

/// Trains the MLP head on latent codes of the frozen encoder, keeping the
/// weights with the lowest validation loss. Encoder arrays are never touched.
pub fn train_ae_classifier(
    model: &AutoencoderModel,
    train: &[(&[u8], usize)],
    val: &[(&[u8], usize)],
) -> Result<AutoencoderModel> {
    if !model.encoder_trained {
        return Err(BaselineError::Untrained("autoencoder"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(BaselineError::Empty("classifier training or validation set"));
    }
    for &(_, l) in train.iter().chain(val) {
        if l > 1 {
            return Err(BaselineError::Label(l));
        }
    }
    let cfg = &model.config;
    let cc = &cfg.classifier;
    let z_train = model.encode(&train.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let z_val = model.encode(&val.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let y_train: Vec<usize> = train.iter().map(|s| s.1).collect();
    let y_val: Vec<usize> = val.iter().map(|s| s.1).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut head = ParamSet::new();
    let mut prev = cfg.latent_width;
    let mut widths = cc.hidden_widths.clone();
    widths.push(2);
    for (i, &w) in widths.iter().enumerate() {
        head.insert(format!("cls{i}.w"), he_uniform(&mut rng, prev, w, cfg.leaky_slope));
        head.insert(format!("cls{i}.b"), DenseArray::zeros(&[w]));
        prev = w;
    }
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cc.learning_rate,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (mean_loss(cfg, &head, &z_val, &y_val)?, head.clone());
    let mut stale = 0;
    for epoch in 1..=cc.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cc.batch_size) {
            let (g, loss) = classifier_graph(
                cfg,
                rows(&z_train, batch),
                Some(batch.iter().map(|&i| y_train[i] as f64).collect()),
            );
            let eval = g.forward(&head)?;
            if !eval.value(loss).data()[0].is_finite() {
                return Err(BaselineError::Diverged { epoch });
            }
            let grads = eval.gradients(loss)?;
            drop(eval);
            adam.step(&mut head, &grads)?;
        }
        let v = mean_loss(cfg, &head, &z_val, &y_val)?;
        if v < best.0 {
            best = (v, head.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cc.patience {
                break;
            }
        }
    }
    let mut out = model.clone();
    out.classifier = Some(best.1);
    Ok(out)
}

/// Probability of the fragile class for one section.
pub fn ae_classify(model: &AutoencoderModel, section: &[u8]) -> Result<f64> {
    if !model.encoder_trained {
        return Err(BaselineError::Untrained("autoencoder"));
    }
    let head = model.classifier.as_ref().ok_or(BaselineError::Untrained("classifier head"))?;
    let z = model.encode(&[section])?;
    Ok(fragile_probabilities(&model.config, head, z)?[0])
}
