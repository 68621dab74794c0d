use onh_autodiff::{Adam, AdamConfig, DenseArray, ParamSet};
use onh_geometry::{augment, OnhPointCloud};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DgcnnConfig, NUM_CLASSES};
use crate::error::{DgcnnError, Result};
use crate::model::{
    feature_matrix, forward, loss_gradients_prediction, DgcnnModel, InputScale, TrainingManifest,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: OnhPointCloud,
    /// 0 = robust, 1 = fragile.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's (augmented) samples, measured before each
    /// sample's optimizer step.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: DgcnnModel,
    pub history: Vec<EpochRecord>,
}

fn data_hash(train: &[LabeledCloud], val: &[LabeledCloud]) -> String {
    let mut h = Sha256::new();
    for (tag, set) in [(b'T', train), (b'V', val)] {
        h.update([tag]);
        for s in set {
            h.update((s.cloud.len() as u64).to_le_bytes());
            for v in s.cloud.features() {
                h.update(v.to_le_bytes());
            }
            h.update((s.label as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn check_set(set: &[LabeledCloud], what: &'static str) -> Result<()> {
    if set.is_empty() {
        return Err(DgcnnError::Empty(what));
    }
    for s in set {
        if !s.cloud.canonical {
            return Err(DgcnnError::NotCanonical);
        }
        if s.label >= NUM_CLASSES {
            return Err(DgcnnError::Label(s.label));
        }
    }
    Ok(())
}

fn augmentation_enabled(cfg: &DgcnnConfig) -> bool {
    let a = &cfg.augmentation;
    a.crop || a.subsample || a.rotate || a.translate || a.noise
}

fn dropout_masks(cfg: &DgcnnConfig, rng: &mut ChaCha8Rng) -> Option<Vec<DenseArray>> {
    if cfg.dropout == 0.0 {
        return None;
    }
    let keep = 1.0 - cfg.dropout;
    let hidden = &cfg.head_widths[..cfg.head_widths.len() - 1];
    Some(
        hidden
            .iter()
            .map(|&w| {
                let data = (0..w)
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                DenseArray::matrix(1, w, data).expect("mask shape")
            })
            .collect(),
    )
}

/// Mean cross-entropy and accuracy over un-augmented clouds.
pub fn evaluate_loss(set: &[LabeledCloud], model: &DgcnnModel) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in set {
        let p = forward(&s.cloud, model)?;
        let [a, b] = p.logits;
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        loss += lse - p.logits[s.label];
        correct += usize::from(p.class() == s.label);
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Adam on softmax cross-entropy, one cloud at a time with gradients averaged
/// over each batch. Every sample is re-augmented each epoch from a seed drawn
/// in a fixed order, so a given config reproduces its history exactly.
pub fn train(
    train: &[LabeledCloud],
    val: &[LabeledCloud],
    cfg: &DgcnnConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_set(train, "training set")?;
    check_set(val, "validation set")?;
    let mut model = DgcnnModel::new(cfg.clone())?;
    if cfg.normalize_inputs {
        model.input_scale = InputScale::fit(train.iter().map(|s| &s.cloud));
    }
    let mut params: ParamSet = model.params().clone();
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut stale = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<ParamSet> = None;
            for &i in batch {
                let sample = &train[i];
                let aug_seed: u64 = rng.random();
                let masks = dropout_masks(cfg, &mut rng);
                let cloud = if augmentation_enabled(cfg) {
                    augment(&sample.cloud, &cfg.augmentation.with_seed(aug_seed))?
                } else {
                    sample.cloud.clone()
                };
                let features = feature_matrix(&cloud, &model)?;
                model.set_params(params.clone());
                let (loss, grads, pred) =
                    loss_gradients_prediction(features, sample.label, &model, masks)?;
                if !loss.is_finite() {
                    return Err(DgcnnError::Diverged { epoch, loss });
                }
                loss_sum += loss;
                correct += usize::from(pred.class() == sample.label);
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (name, g) in grads {
                            let dst = a.get_mut(&name).expect("same parameter names");
                            for (d, v) in dst.data_mut().iter_mut().zip(g.data()) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("nonempty batch");
            let scale = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grads)?;
        }
        model.set_params(params.clone());
        let (val_loss, val_acc) = evaluate_loss(val, &model)?;
        if !val_loss.is_finite() {
            return Err(DgcnnError::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            validation_loss: val_loss,
            validation_accuracy: val_acc,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_loss, best_epoch, best_params) = best.expect("at least one epoch");
    model.set_params(best_params);
    model.manifest = Some(TrainingManifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        data_hash: data_hash(train, val),
        best_epoch,
        best_validation_loss: best_loss,
        epochs_run: history.len(),
    });
    Ok(TrainOutcome { model, history })
}
