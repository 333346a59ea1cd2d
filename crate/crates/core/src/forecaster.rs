//! Reference forecaster: patch embedding followed by residual MLP blocks.
//!
//! ```text
//! context [L] -> patches [P x p] -> ReLU(patch · W_embed + b_embed) -> x [D = P·E]
//! x <- x + ReLU(x · W1 + b1) · W2 + b2        (n_blocks times)
//! forecast = x · W_head + b_head              [H]
//! ```
//!
//! All weights are stored `[fan_in x fan_out]` so a batch of row vectors
//! multiplies on the left. Gradients are computed by hand and share the
//! parameter layout.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub context_len: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            context_len: 256,
            horizon: 128,
            patch_len: 32,
            embed_dim: 64,
            hidden_dim: 512,
            n_blocks: 2,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.context_len,
            self.horizon,
            self.patch_len,
            self.embed_dim,
            self.hidden_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if self.context_len % self.patch_len != 0 {
            return Err(Error::Config(format!(
                "patch_len {} does not divide context_len {}",
                self.patch_len, self.context_len
            )));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        self.context_len / self.patch_len
    }

    /// Width of the residual stream.
    pub fn model_dim(&self) -> usize {
        self.n_patches() * self.embed_dim
    }

    /// Tensor names and shapes in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.model_dim();
        let mut layout = vec![
            ("embed.weight".to_string(), vec![self.patch_len, self.embed_dim]),
            ("embed.bias".to_string(), vec![self.embed_dim]),
        ];
        for k in 0..self.n_blocks {
            layout.push((format!("blocks.{k}.w1"), vec![d, self.hidden_dim]));
            layout.push((format!("blocks.{k}.b1"), vec![self.hidden_dim]));
            layout.push((format!("blocks.{k}.w2"), vec![self.hidden_dim, d]));
            layout.push((format!("blocks.{k}.b2"), vec![d]));
        }
        layout.push(("head.weight".to_string(), vec![d, self.horizon]));
        layout.push(("head.bias".to_string(), vec![self.horizon]));
        layout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embed_w: Array2<f64>,
    pub embed_b: Array1<f64>,
    pub blocks: Vec<ResidualBlock>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// Partial derivatives of the loss, laid out exactly like [`ModelParams`].
pub type Gradients = ModelParams;

fn glorot(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform(-bound, bound))
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let (d, h) = (config.model_dim(), config.hidden_dim);
        Self {
            config,
            embed_w: Array2::zeros((config.patch_len, config.embed_dim)),
            embed_b: Array1::zeros(config.embed_dim),
            blocks: (0..config.n_blocks)
                .map(|_| ResidualBlock {
                    w1: Array2::zeros((d, h)),
                    b1: Array1::zeros(h),
                    w2: Array2::zeros((h, d)),
                    b2: Array1::zeros(d),
                })
                .collect(),
            head_w: Array2::zeros((d, config.horizon)),
            head_b: Array1::zeros(config.horizon),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// Flat views of every tensor in layout order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![slice(&self.embed_w), self.embed_b.as_slice().unwrap()];
        for b in &self.blocks {
            out.push(slice(&b.w1));
            out.push(b.b1.as_slice().unwrap());
            out.push(slice(&b.w2));
            out.push(b.b2.as_slice().unwrap());
        }
        out.push(slice(&self.head_w));
        out.push(self.head_b.as_slice().unwrap());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.embed_w.as_slice_mut().unwrap(),
            self.embed_b.as_slice_mut().unwrap(),
        ];
        for b in &mut self.blocks {
            out.push(b.w1.as_slice_mut().unwrap());
            out.push(b.b1.as_slice_mut().unwrap());
            out.push(b.w2.as_slice_mut().unwrap());
            out.push(b.b2.as_slice_mut().unwrap());
        }
        out.push(self.head_w.as_slice_mut().unwrap());
        out.push(self.head_b.as_slice_mut().unwrap());
        out
    }

    /// Rebuilds parameters from flat tensors in layout order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let layout = config.tensor_layout();
        if tensors.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((dst, src), (name, _)) in params.tensors_mut().into_iter().zip(&tensors).zip(&layout) {
            if dst.len() != src.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {} values, got {}",
                    dst.len(),
                    src.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// SHA-256 over the little-endian bytes of every tensor, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            for v in t {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

/// Glorot-uniform weights, zero biases, deterministic in `config.init_seed`.
pub fn init_params(config: ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = SeededRng::new(config.init_seed);
    let (d, h) = (config.model_dim(), config.hidden_dim);
    let mut params = ModelParams::zeros(config);
    params.embed_w = glorot(&mut rng, config.patch_len, config.embed_dim);
    for block in &mut params.blocks {
        block.w1 = glorot(&mut rng, d, h);
        block.w2 = glorot(&mut rng, h, d);
    }
    params.head_w = glorot(&mut rng, d, config.horizon);
    Ok(params)
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    patches: Array2<f64>,
    embed_pre: Array2<f64>,
    /// Residual-stream input to each block, then the head input.
    streams: Vec<Array2<f64>>,
    hidden_pre: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over every ReLU in the pass.
    pub fn min_abs_preactivation(&self) -> f64 {
        std::iter::once(&self.embed_pre)
            .chain(&self.hidden_pre)
            .flat_map(|a| a.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn check_finite(a: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Batched forward pass over `contexts` `[batch x context_len]`.
pub fn forward_cached(params: &ModelParams, contexts: ArrayView2<f64>) -> Result<ForwardCache> {
    let cfg = &params.config;
    if contexts.ncols() != cfg.context_len {
        return Err(Error::ShapeMismatch(format!(
            "context length {} != model context_len {}",
            contexts.ncols(),
            cfg.context_len
        )));
    }
    check_finite(&contexts, "context")?;
    let batch = contexts.nrows();
    let patches = contexts
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((batch * cfg.n_patches(), cfg.patch_len))
        .expect("context_len is a multiple of patch_len");
    let embed_pre = patches.dot(&params.embed_w) + &params.embed_b;
    let mut x = relu(&embed_pre)
        .into_shape_with_order((batch, cfg.model_dim()))
        .expect("patch embeddings concatenate to model_dim");

    let mut streams = Vec::with_capacity(cfg.n_blocks + 1);
    let mut hidden_pre = Vec::with_capacity(cfg.n_blocks);
    let mut hidden = Vec::with_capacity(cfg.n_blocks);
    for block in &params.blocks {
        let z = x.dot(&block.w1) + &block.b1;
        let h = relu(&z);
        let next = &x + &h.dot(&block.w2) + &block.b2;
        streams.push(x);
        hidden_pre.push(z);
        hidden.push(h);
        x = next;
    }
    let output = x.dot(&params.head_w) + &params.head_b;
    streams.push(x);
    Ok(ForwardCache {
        patches,
        embed_pre,
        streams,
        hidden_pre,
        hidden,
        output,
    })
}

pub fn forward_batch(params: &ModelParams, contexts: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(forward_cached(params, contexts)?.output)
}

/// Forecast for a single context window.
pub fn forward(params: &ModelParams, context: &[f64]) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, context.len()), context)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(forward_batch(params, view)?.into_raw_vec_and_offset().0)
}

/// Mean squared error over the horizon.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Loss and exact gradients averaged over a batch of windows.
///
/// The loss is the batch mean of per-window MSE.
pub fn backward_batch(
    params: &ModelParams,
    contexts: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Gradients)> {
    let cfg = params.config;
    if targets.ncols() != cfg.horizon || targets.nrows() != contexts.nrows() || contexts.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "targets {:?} vs contexts {:?} for horizon {}",
            targets.dim(),
            contexts.dim(),
            cfg.horizon
        )));
    }
    check_finite(&targets, "target")?;
    let cache = forward_cached(params, contexts)?;
    let batch = contexts.nrows();
    let scale = 1.0 / (batch * cfg.horizon) as f64;

    let residual = &cache.output - &targets;
    let loss = residual.iter().map(|r| r * r).sum::<f64>() * scale;
    let d_out = residual * (2.0 * scale);

    let mut grads = params.zeros_like();
    let head_in = cache.streams.last().expect("head input cached");
    grads.head_w = head_in.t().dot(&d_out);
    grads.head_b = d_out.sum_axis(Axis(0));
    let mut dx = d_out.dot(&params.head_w.t());

    for k in (0..cfg.n_blocks).rev() {
        let block = &params.blocks[k];
        let g = &mut grads.blocks[k];
        g.w2 = cache.hidden[k].t().dot(&dx);
        g.b2 = dx.sum_axis(Axis(0));
        let mut dz = dx.dot(&block.w2.t());
        Zip::from(&mut dz)
            .and(&cache.hidden_pre[k])
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        g.w1 = cache.streams[k].t().dot(&dz);
        g.b1 = dz.sum_axis(Axis(0));
        dx = dx + dz.dot(&block.w1.t());
    }

    let mut d_embed = dx
        .into_shape_with_order((batch * cfg.n_patches(), cfg.embed_dim))
        .expect("stream splits back into patch embeddings");
    Zip::from(&mut d_embed)
        .and(&cache.embed_pre)
        .for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
    grads.embed_w = cache.patches.t().dot(&d_embed);
    grads.embed_b = d_embed.sum_axis(Axis(0));

    // transposed products come back in Fortran order; the optimizer wants flat slices
    for t in [&mut grads.embed_w, &mut grads.head_w] {
        *t = t.as_standard_layout().into_owned();
    }
    for g in &mut grads.blocks {
        g.w1 = g.w1.as_standard_layout().into_owned();
        g.w2 = g.w2.as_standard_layout().into_owned();
    }
    Ok((loss, grads))
}

/// Single-window loss and gradients.
pub fn backward(params: &ModelParams, context: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
    let c = ArrayView2::from_shape((1, context.len()), context)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let t = ArrayView2::from_shape((1, target.len()), target)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    backward_batch(params, c, t)
}

/// Anything that maps a batch of contexts to a batch of forecasts.
pub trait Forecast {
    fn context_len(&self) -> usize;
    fn horizon(&self) -> usize;
    fn forecast_batch(&self, contexts: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl Forecast for ModelParams {
    fn context_len(&self) -> usize {
        self.config.context_len
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forecast_batch(&self, contexts: ArrayView2<f64>) -> Result<Array2<f64>> {
        forward_batch(self, contexts)
    }
}
