use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{AutodiffError, Result};
use crate::ParamSet;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: DenseArray,
    pub v: DenseArray,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        assert!(config.beta1 > 0.0 && config.beta1 < 1.0, "beta1 must be in (0, 1)");
        assert!(config.beta2 > 0.0 && config.beta2 < 1.0, "beta2 must be in (0, 1)");
        Self {
            t: 0,
            m: DenseArray::zeros(shape),
            v: DenseArray::zeros(shape),
            config,
        }
    }
}

/// One bias-corrected Adam update. `name` is only used in error messages.
pub fn adam_step(
    name: &str,
    params: &DenseArray,
    grads: &DenseArray,
    state: &AdamState,
) -> Result<(DenseArray, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    adam_step_in_place(name, &mut p, grads, &mut s)?;
    Ok((p, s))
}

fn adam_step_in_place(
    name: &str,
    params: &mut DenseArray,
    grads: &DenseArray,
    state: &mut AdamState,
) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.m.shape() {
        return Err(AutodiffError::Shape {
            node: name.to_string(),
            detail: format!(
                "params {:?}, grads {:?}, state {:?}",
                params.shape(),
                grads.shape(),
                state.m.shape()
            ),
        });
    }
    if !grads.all_finite() {
        return Err(AutodiffError::NonFiniteGradient(name.to_string()));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((p, &g), m), v) in params.data_mut().iter_mut().zip(grads.data()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Adam over a whole [`ParamSet`], one state per named parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    states: std::collections::BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            states: Default::default(),
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Updates every parameter in `params` with its gradient from `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| AutodiffError::MissingGradient(name.clone()))?;
            let config = self.config;
            let state = self
                .states
                .entry(name.clone())
                .or_insert_with(|| AdamState::new(p.shape(), config));
            adam_step_in_place(name, p, g, state)?;
        }
        Ok(())
    }
}
