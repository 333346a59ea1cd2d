//! Oracles shared by the integration tests. Nothing here calls the code path
//! it is used to check.

#![allow(dead_code)]

use forgetbench::forecaster::{forward, forward_cached, init_params, loss_mse, ModelConfig, ModelParams};
use forgetbench::rng::SeededRng;
use ndarray::Array2;

/// Every (target start) admissible for a training window, found by testing
/// each index of the series.
pub fn brute_train_starts(train_end: usize, context: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut k = 0;
    for s in 0..train_end {
        let ctx_ok = s >= context;
        let tgt_ok = s + horizon <= train_end;
        if ctx_ok && tgt_ok {
            if k % stride == 0 {
                starts.push(s);
            }
            k += 1;
        }
    }
    starts
}

/// Eval target starts: region start, then every `stride`, while the target fits.
pub fn brute_eval_starts(lo: usize, hi: usize, horizon: usize, stride: usize) -> Vec<usize> {
    (0..hi)
        .filter(|&s| s >= lo && (s - lo) % stride == 0 && s + horizon <= hi)
        .collect()
}

pub fn random_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}

pub fn random_small_config(rng: &mut SeededRng) -> ModelConfig {
    let patch_len = 1 + rng.below(4) as usize;
    let n_patches = 1 + rng.below(4) as usize;
    ModelConfig {
        context_len: patch_len * n_patches,
        horizon: 1 + rng.below(4) as usize,
        patch_len,
        embed_dim: 1 + rng.below(4) as usize,
        hidden_dim: 1 + rng.below(6) as usize,
        n_blocks: rng.below(3) as usize,
        init_seed: rng.next_u64(),
    }
}

/// Glorot weights plus random non-zero biases so every bias path is live.
pub fn random_params(cfg: ModelConfig, rng: &mut SeededRng) -> ModelParams {
    let mut p = init_params(cfg).unwrap();
    p.embed_b.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
    for b in &mut p.blocks {
        b.b1.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
        b.b2.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
    }
    p.head_b.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
    p
}

pub fn min_kink_distance(p: &ModelParams, context: &[f64]) -> f64 {
    let c = Array2::from_shape_vec((1, context.len()), context.to_vec()).unwrap();
    forward_cached(p, c.view()).unwrap().min_abs_preactivation()
}

/// Central differences of the single-window MSE for every parameter entry.
pub fn finite_difference_grads(p: &ModelParams, context: &[f64], target: &[f64], h: f64) -> Vec<Vec<f64>> {
    let loss_at = |q: &ModelParams| loss_mse(&forward(q, context).unwrap(), target).unwrap();
    let shapes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    let mut q = p.clone();
    for (ti, &len) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for i in 0..len {
            let orig = q.tensors()[ti][i];
            q.tensors_mut()[ti][i] = orig + h;
            let up = loss_at(&q);
            q.tensors_mut()[ti][i] = orig - h;
            let down = loss_at(&q);
            q.tensors_mut()[ti][i] = orig;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Relative error `|a - n| / max(|a|, |n|)`; exact agreement (including both
/// zero) counts as zero error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// A scaled-down experiment that still exercises every code path in seconds.
pub fn small_experiment() -> forgetbench::config::ExperimentConfig {
    forgetbench::config::ExperimentConfig {
        lr: 1e-3,
        epochs: 2,
        context_len: 64,
        horizon: 32,
        patch_len: 16,
        embed_dim: 16,
        hidden_dim: 64,
        n_blocks: 2,
        shuffle_seed: 5,
        init_seed: 9,
        ..Default::default()
    }
    .resolved()
}

/// Answers every context it has seen with the true continuation.
pub struct OracleStub {
    pub windows: forgetbench::pipeline::WindowSet,
}

impl forgetbench::forecaster::Forecast for OracleStub {
    fn context_len(&self) -> usize {
        self.windows.contexts.ncols()
    }

    fn horizon(&self) -> usize {
        self.windows.targets.ncols()
    }

    fn forecast_batch(&self, contexts: ndarray::ArrayView2<f64>) -> forgetbench::Result<Array2<f64>> {
        let mut out = Array2::zeros((contexts.nrows(), self.horizon()));
        for (i, row) in contexts.rows().into_iter().enumerate() {
            let k = self
                .windows
                .contexts
                .rows()
                .into_iter()
                .position(|r| r == row)
                .expect("context seen before");
            out.row_mut(i).assign(&self.windows.targets.row(k));
        }
        Ok(out)
    }
}

/// Always predicts zero, i.e. the train mean in standardized units.
pub struct ZeroModel {
    pub context_len: usize,
    pub horizon: usize,
}

impl forgetbench::forecaster::Forecast for ZeroModel {
    fn context_len(&self) -> usize {
        self.context_len
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast_batch(&self, contexts: ndarray::ArrayView2<f64>) -> forgetbench::Result<Array2<f64>> {
        Ok(Array2::zeros((contexts.nrows(), self.horizon)))
    }
}
