//! Adam with decoupled weight decay, and the epoch/mini-batch loop.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{backward_batch, Gradients, ModelParams};
use crate::pipeline::WindowSet;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 5,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1
            && self.epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam update with decoupled weight decay:
///
/// `p <- p·(1 - lr·wd) - lr·m̂/(√v̂ + ε)`
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.config != params.config || state.m.config != params.config {
        return Err(Error::ShapeMismatch("gradient/state layout differs from parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;

    let g_all = grads.tensors();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p = *p * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean window loss per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
    /// Batch loss before each optimizer step.
    pub step_losses: Vec<f64>,
}

/// Shuffled mini-batch Adam over `windows`, continuing from `params`.
///
/// Epoch `e` shuffles with seed `shuffle_seed ^ e`; the final batch of an
/// epoch keeps whatever windows remain.
pub fn train(params: &mut ModelParams, windows: &WindowSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::NoWindows("empty training window set".into()));
    }
    let mut state = AdamState::new(params);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        SeededRng::new(cfg.shuffle_seed ^ epoch as u64).shuffle(&mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let contexts = windows.contexts.select(Axis(0), batch);
            let targets = windows.targets.select(Axis(0), batch);
            let (loss, grads) = backward_batch(params, contexts.view(), targets.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, step {}",
                    state.t + 1
                )));
            }
            adam_step(params, &grads, &mut state, cfg)?;
            if !params.is_finite() {
                return Err(Error::NonFinite(format!("parameters after step {}", state.t)));
            }
            step_losses.push(loss);
            weighted += loss * batch.len() as f64;
        }
        let mean = weighted / windows.len() as f64;
        log::debug!("epoch {}/{}: loss {mean:.6}", epoch + 1, cfg.epochs);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        epoch_losses,
        step_losses,
    })
}

pub fn batches_per_epoch(n_windows: usize, batch_size: usize) -> usize {
    n_windows.div_ceil(batch_size)
}
