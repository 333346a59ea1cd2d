//! Two-stage sequential fine-tuning and backward transfer.
//!
//! Stage one trains on dataset A, stage two continues from the stage-one
//! weights on dataset B. Both datasets are scored on their test region after
//! each stage, each in its own standardized units. Backward transfer on A is
//! `MAE_A(after stage two) - MAE_A(after stage one)`; positive means forgetting.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::forecaster::{init_params, Forecast, ModelParams};
use crate::optim::{train, TrainConfig};
use crate::pipeline::{PreparedDataset, Region, Scaler, SplitIndices, WindowConfig, WindowSet};
use crate::rng::SeededRng;
use crate::synthgen::{generate_series, sample_phases, GenerationConfig, SignalSpec, DEFAULT_PHASE_DIV};

/// Mean absolute error over every window and horizon step.
pub fn mae(forecasts: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    if forecasts.dim() != targets.dim() || targets.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "forecasts {:?} vs targets {:?}",
            forecasts.dim(),
            targets.dim()
        )));
    }
    let total: f64 = forecasts
        .iter()
        .zip(targets.iter())
        .map(|(f, t)| (f - t).abs())
        .sum();
    Ok(total / targets.len() as f64)
}

pub fn evaluate_windows(model: &dyn Forecast, windows: &WindowSet) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::NoWindows("no evaluation windows".into()));
    }
    let forecasts = model.forecast_batch(windows.contexts.view())?;
    mae(forecasts.view(), windows.targets.view())
}

pub fn evaluate_region(
    model: &dyn Forecast,
    dataset: &PreparedDataset,
    region: Region,
    wcfg: &WindowConfig,
) -> Result<f64> {
    evaluate_windows(model, &dataset.eval_windows(region, wcfg)?)
}

/// Test-region MAE in the dataset's standardized units.
pub fn evaluate(model: &dyn Forecast, dataset: &PreparedDataset, wcfg: &WindowConfig) -> Result<f64> {
    evaluate_region(model, dataset, Region::Test, wcfg)
}

/// Backward transfer for two tasks: `mae_after - mae_before`.
pub fn compute_bwt(mae_before: f64, mae_after: f64) -> Result<f64> {
    for v in [mae_before, mae_after] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFinite(format!("MAE must be finite and non-negative, got {v}")));
        }
    }
    Ok(mae_after - mae_before)
}

/// Per-role values: `A` is the stage-one dataset, `B` the stage-two dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValues {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: u8,
    pub trained_on: String,
    /// Test MAE.
    pub mae: PairValues,
    pub val_mae: PairValues,
    /// File name of the checkpoint, relative to the report.
    pub checkpoint: Option<String>,
    pub start_fingerprint: String,
    pub end_fingerprint: String,
    pub epoch_losses: Vec<f64>,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub source: String,
    pub scaler: Scaler,
    pub split: SplitIndices,
}

impl From<&PreparedDataset> for DatasetInfo {
    fn from(d: &PreparedDataset) -> Self {
        Self {
            id: d.id.clone(),
            source: d.source.clone(),
            scaler: d.scaler,
            split: d.split,
        }
    }
}

/// Machine-readable outcome of one protocol run (`report.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub pair: String,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub window: WindowConfig,
    pub datasets: DatasetPair,
    pub stage1: StageResult,
    pub stage2: StageResult,
    pub bwt_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPair {
    #[serde(rename = "A")]
    pub a: DatasetInfo,
    #[serde(rename = "B")]
    pub b: DatasetInfo,
}

impl ProtocolReport {
    pub fn dataset_a(&self) -> &str {
        &self.datasets.a.id
    }

    pub fn dataset_b(&self) -> &str {
        &self.datasets.b.id
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad report: {e}")))
    }
}

pub fn pair_label(a: &str, b: &str) -> String {
    format!("{a} → {b}")
}

fn run_stage(
    stage: u8,
    params: &mut ModelParams,
    trained_on: &PreparedDataset,
    a: &PreparedDataset,
    b: &PreparedDataset,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<StageResult> {
    let wcfg = cfg.window_config();
    let tcfg = cfg.train_config();
    let start_fingerprint = params.fingerprint();
    let windows = trained_on.train_windows(&wcfg)?;
    log::info!(
        "stage {stage}: training on {} ({} windows, lr {:e}, {} epochs)",
        trained_on.id,
        windows.len(),
        tcfg.lr,
        tcfg.epochs
    );
    let outcome = train(params, &windows, &tcfg)?;
    let mae = PairValues {
        a: evaluate(params, a, &wcfg)?,
        b: evaluate(params, b, &wcfg)?,
    };
    let val_mae = PairValues {
        a: evaluate_region(params, a, Region::Val, &wcfg)?,
        b: evaluate_region(params, b, Region::Val, &wcfg)?,
    };
    log::info!(
        "stage {stage}: test MAE {}={:.4} {}={:.4}, val MAE {:.4}/{:.4}",
        a.id,
        mae.a,
        b.id,
        mae.b,
        val_mae.a,
        val_mae.b
    );
    let checkpoint = match out_dir {
        Some(dir) => {
            let name = format!("stage{stage}.ckpt");
            save_checkpoint(params, &dir.join(&name))?;
            Some(name)
        }
        None => None,
    };
    Ok(StageResult {
        stage,
        trained_on: trained_on.id.clone(),
        mae,
        val_mae,
        checkpoint,
        start_fingerprint,
        end_fingerprint: params.fingerprint(),
        epoch_losses: outcome.epoch_losses,
        train_config: tcfg,
    })
}

/// Runs both stages. With `out_dir`, each stage's weights are written there
/// and stage two resumes from the stage-one file on disk.
pub fn run_protocol(
    dataset_a: &PreparedDataset,
    dataset_b: &PreparedDataset,
    cfg: &ExperimentConfig,
    initial: Option<ModelParams>,
    out_dir: Option<&Path>,
) -> Result<ProtocolReport> {
    if dataset_a.id == dataset_b.id {
        return Err(Error::Config(format!("datasets must differ (both `{}`)", dataset_a.id)));
    }
    cfg.validate()?;
    let model_cfg = cfg.model_config();
    let mut params = match initial {
        Some(p) => {
            if p.config.context_len != model_cfg.context_len || p.config.horizon != model_cfg.horizon {
                return Err(Error::Config(format!(
                    "initial checkpoint is {}→{}, config wants {}→{}",
                    p.config.context_len, p.config.horizon, model_cfg.context_len, model_cfg.horizon
                )));
            }
            p
        }
        None => init_params(model_cfg)?,
    };

    let stage1 = run_stage(1, &mut params, dataset_a, dataset_a, dataset_b, cfg, out_dir)?;
    if let (Some(dir), Some(name)) = (out_dir, &stage1.checkpoint) {
        params = load_checkpoint(&dir.join(name))?.0;
    }
    let stage2 = run_stage(2, &mut params, dataset_b, dataset_a, dataset_b, cfg, out_dir)?;
    if stage2.start_fingerprint != stage1.end_fingerprint {
        return Err(Error::Checkpoint("stage two did not start from the stage-one weights".into()));
    }
    let bwt_a = compute_bwt(stage1.mae.a, stage2.mae.a)?;
    Ok(ProtocolReport {
        pair: pair_label(&dataset_a.id, &dataset_b.id),
        lr: cfg.lr,
        epochs: cfg.epochs,
        seed: cfg.shuffle_seed,
        window: cfg.window_config(),
        datasets: DatasetPair {
            a: dataset_a.into(),
            b: dataset_b.into(),
        },
        stage1,
        stage2,
        bwt_a,
    })
}

/// A random multi-sine spec: 3 to 10 components, periods uniform in [20, 1400).
pub fn random_spec(rng: &mut SeededRng) -> SignalSpec {
    let n = 3 + rng.below(8) as usize;
    let periods: Vec<f64> = (0..n).map(|_| rng.uniform(20.0, 1400.0)).collect();
    let phase_seed = rng.next_u64();
    sample_phases(&periods, DEFAULT_PHASE_DIV, phase_seed).expect("periods are positive")
}

/// The pool of specs `pretrain_generalist` draws for a given seed.
pub fn generalist_pool(pool_size: usize, pool_seed: u64) -> Vec<SignalSpec> {
    let mut rng = SeededRng::new(pool_seed);
    (0..pool_size).map(|_| random_spec(&mut rng)).collect()
}

pub fn prepare_spec(id: &str, spec: &SignalSpec, wcfg: &WindowConfig) -> Result<PreparedDataset> {
    let series = generate_series(spec, &GenerationConfig::default())?;
    Ok(PreparedDataset::new(id, series, wcfg)?.with_source(format!("random:seed={}", spec.seed)))
}

/// Trains a fresh model on the pooled train windows of `pool_size` random
/// signals, giving a generic starting point for [`run_protocol`].
pub fn pretrain_generalist(pool_size: usize, pool_seed: u64, cfg: &ExperimentConfig) -> Result<ModelParams> {
    if pool_size == 0 {
        return Err(Error::Config("pool_size must be at least 1".into()));
    }
    cfg.validate()?;
    let wcfg = cfg.window_config();
    let sets = generalist_pool(pool_size, pool_seed)
        .iter()
        .enumerate()
        .map(|(i, spec)| prepare_spec(&format!("pool{i}"), spec, &wcfg)?.train_windows(&wcfg))
        .collect::<Result<Vec<_>>>()?;
    let windows = WindowSet::concat(&sets)?;
    let mut params = init_params(cfg.model_config())?;
    log::info!("pretraining on {} windows from {pool_size} signals", windows.len());
    train(&mut params, &windows, &cfg.train_config())?;
    Ok(params)
}
