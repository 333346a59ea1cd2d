//! Ablation grids, result tables and forecast plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::load_checkpoint;
use crate::config::ExperimentConfig;
use crate::continual::{pair_label, run_protocol, ProtocolReport};
use crate::error::{Error, Result};
use crate::forecaster::{Forecast, ModelParams};
use crate::pipeline::{read_csv, PreparedDataset, Region, WindowConfig, TIMESTAMP_FORMAT};
use crate::synthgen::{generate_series, BuiltinDataset, GenerationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    pub learning_rates: Vec<f64>,
    pub epoch_counts: Vec<usize>,
    /// `[A, B]` dataset names; built-ins unless `data_dir` supplies `<name>.csv`.
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub base_config: ExperimentConfig,
    #[serde(default)]
    pub base_seed: u64,
    /// Phase seed for the built-in datasets.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

impl AblationGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("grid: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.epoch_counts.is_empty() || self.pairs.is_empty() {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        if self.learning_rates.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epoch_counts.contains(&0) {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        if let Some((a, _)) = self.pairs.iter().find(|(a, b)| a == b) {
            return Err(Error::Config(format!("datasets must differ (pair {a} → {a})")));
        }
        self.base_config.validate()
    }

    /// Distinct cells ordered by lr (descending), epochs, then pair label.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut lrs = dedup_by(&self.learning_rates, |lr| lr.to_bits());
        lrs.sort_by(|x, y| y.total_cmp(x));
        let mut epochs = dedup_by(&self.epoch_counts, |e| *e);
        epochs.sort_unstable();
        let mut pairs = dedup_by(&self.pairs, |p| p.clone());
        pairs.sort_by_key(|(a, b)| pair_label(a, b));
        let mut cells = Vec::new();
        for &lr in &lrs {
            for &ep in &epochs {
                for (a, b) in &pairs {
                    let id = format!("lr{lr:e}_ep{ep}_{a}-{b}");
                    cells.push(GridCell {
                        seed: self.base_seed ^ stable_hash(&id),
                        id,
                        lr,
                        epochs: ep,
                        dataset_a: a.clone(),
                        dataset_b: b.clone(),
                    });
                }
            }
        }
        cells
    }
}

fn dedup_by<T: Clone, K: PartialEq>(items: &[T], key: impl Fn(&T) -> K) -> Vec<T> {
    let mut seen: Vec<K> = Vec::new();
    let mut out = Vec::new();
    for item in items {
        let k = key(item);
        if !seen.contains(&k) {
            seen.push(k);
            out.push(item.clone());
        }
    }
    out
}

/// First eight bytes of SHA-256, little-endian.
pub fn stable_hash(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub id: String,
    pub lr: f64,
    pub epochs: usize,
    pub dataset_a: String,
    pub dataset_b: String,
    /// `base_seed ^ stable_hash(id)`; drives the shuffle order.
    pub seed: u64,
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub lr: f64,
    pub epochs: usize,
    pub pair: String,
    pub dataset: String,
    pub stage1: f64,
    pub stage2: f64,
    /// Only on the stage-one dataset.
    pub bwt: Option<f64>,
}

impl ResultRow {
    pub fn from_report(report: &ProtocolReport) -> [ResultRow; 2] {
        let row = |dataset: &str, s1: f64, s2: f64, bwt| ResultRow {
            lr: report.lr,
            epochs: report.epochs,
            pair: report.pair.clone(),
            dataset: dataset.to_string(),
            stage1: s1,
            stage2: s2,
            bwt,
        };
        [
            row(
                report.dataset_a(),
                report.stage1.mae.a,
                report.stage2.mae.a,
                Some(report.bwt_a),
            ),
            row(report.dataset_b(), report.stage1.mae.b, report.stage2.mae.b, None),
        ]
    }

    /// Backward transfer recomputed from this row's own stage values.
    pub fn recomputed_bwt(&self) -> Option<f64> {
        self.bwt.map(|_| self.stage2 - self.stage1)
    }
}

const COLUMNS: [&str; 7] = ["LR", "Epochs", "Experiment", "Dataset", "Stage one", "Stage two", "BWT"];

fn signed_2dp(v: f64) -> String {
    let s = format!("{v:+.2}");
    if s == "-0.00" {
        "+0.00".to_string()
    } else {
        s
    }
}

pub fn render_markdown(rows: &[ResultRow]) -> String {
    let mut out = format!("| {} |\n", COLUMNS.join(" | "));
    out.push_str("|---|---:|---|---|---:|---:|---:|\n");
    for r in rows {
        let bwt = r.recomputed_bwt().map_or_else(|| "–".to_string(), signed_2dp);
        let _ = writeln!(
            out,
            "| {:e} | {} | {} | {} | {:.2} | {:.2} | {} |",
            r.lr, r.epochs, r.pair, r.dataset, r.stage1, r.stage2, bwt
        );
    }
    out
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.lr.to_string(),
            r.epochs.to_string(),
            r.pair.clone(),
            r.dataset.clone(),
            r.stage1.to_string(),
            r.stage2.to_string(),
            r.bwt.map(|b| b.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let bad = |msg: String| Error::Config(format!("results csv: {msg}"));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?;
    if headers.iter().ne(COLUMNS) {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            Ok(ResultRow {
                lr: num(&rec[0])?,
                epochs: rec[1].parse().map_err(|_| bad(format!("bad epochs `{}`", &rec[1])))?,
                pair: rec[2].to_string(),
                dataset: rec[3].to_string(),
                stage1: num(&rec[4])?,
                stage2: num(&rec[5])?,
                bwt: if rec[6].is_empty() { None } else { Some(num(&rec[6])?) },
            })
        })
        .collect()
}

pub fn rows_from_reports(reports: &[ProtocolReport]) -> Vec<ResultRow> {
    reports.iter().flat_map(ResultRow::from_report).collect()
}

/// Writes `results.csv` and `results.md` into `dir`.
pub fn write_tables(rows: &[ResultRow], dir: &Path) -> Result<()> {
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, render_csv(rows)).map_err(|e| Error::io(&csv_path, e))?;
    let md_path = dir.join("results.md");
    fs::write(&md_path, render_markdown(rows)).map_err(|e| Error::io(&md_path, e))
}

/// Resolves a dataset name for a grid: `<data_dir>/<name lowercase>.csv` when
/// present, otherwise the built-in generator.
pub fn load_named_dataset(
    name: &str,
    data_seed: u64,
    data_dir: Option<&Path>,
    wcfg: &WindowConfig,
) -> Result<PreparedDataset> {
    if let Some(dir) = data_dir {
        let path = dir.join(format!("{}.csv", name.to_ascii_lowercase()));
        if path.exists() {
            let series = read_csv(&path)?;
            return Ok(PreparedDataset::new(name, series, wcfg)?.with_source(path.display().to_string()));
        }
    }
    let builtin: BuiltinDataset = name.parse()?;
    let series = generate_series(&builtin.spec(data_seed), &GenerationConfig::default())?;
    Ok(PreparedDataset::new(name, series, wcfg)?.with_source(format!("builtin:{builtin}:seed={data_seed}")))
}

/// Re-materializes a dataset from the source string recorded in a report.
pub fn load_recorded_dataset(id: &str, source: &str, wcfg: &WindowConfig) -> Result<PreparedDataset> {
    if let Some(rest) = source.strip_prefix("builtin:") {
        let (name, seed) = rest
            .split_once(":seed=")
            .ok_or_else(|| Error::Config(format!("bad dataset source `{source}`")))?;
        let seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("bad dataset source `{source}`")))?;
        let builtin: BuiltinDataset = name.parse()?;
        let series = generate_series(&builtin.spec(seed), &GenerationConfig::default())?;
        return Ok(PreparedDataset::new(id, series, wcfg)?.with_source(source));
    }
    let series = read_csv(Path::new(source))?;
    Ok(PreparedDataset::new(id, series, wcfg)?.with_source(source))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub reports: Vec<ProtocolReport>,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs every distinct cell, writing `cells/<id>/` and the summary tables
/// under `out_dir`. A failing cell is recorded and the rest still run.
pub fn run_grid(grid: &AblationGrid, out_dir: &Path) -> Result<GridOutcome> {
    grid.validate()?;
    let wcfg = grid.base_config.window_config();
    let initial = match &grid.base_config.initial_checkpoint {
        Some(path) => Some(load_checkpoint(path)?.0),
        None => None,
    };

    let mut datasets: BTreeMap<String, std::result::Result<PreparedDataset, String>> = BTreeMap::new();
    for (a, b) in &grid.pairs {
        for name in [a, b] {
            datasets.entry(name.clone()).or_insert_with(|| {
                load_named_dataset(name, grid.data_seed, grid.data_dir.as_deref(), &wcfg)
                    .map_err(|e| e.to_string())
            });
        }
    }

    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for cell in grid.cells() {
        log::info!("cell {}", cell.id);
        match run_cell(grid, &cell, &datasets, initial.clone(), &cells_dir.join(&cell.id)) {
            Ok(report) => reports.push(report),
            Err(e) => {
                log::error!("cell {} failed: {e}", cell.id);
                failures.push(CellFailure {
                    cell: cell.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let rows = rows_from_reports(&reports);
    write_tables(&rows, out_dir)?;
    Ok(GridOutcome {
        reports,
        rows,
        failures,
    })
}

fn run_cell(
    grid: &AblationGrid,
    cell: &GridCell,
    datasets: &BTreeMap<String, std::result::Result<PreparedDataset, String>>,
    initial: Option<ModelParams>,
    dir: &Path,
) -> Result<ProtocolReport> {
    let get = |name: &str| -> Result<&PreparedDataset> {
        datasets[name]
            .as_ref()
            .map_err(|e| Error::Config(format!("dataset {name}: {e}")))
    };
    let (a, b) = (get(&cell.dataset_a)?, get(&cell.dataset_b)?);
    let cfg = ExperimentConfig {
        lr: cell.lr,
        epochs: cell.epochs,
        shuffle_seed: cell.seed,
        ..grid.base_config.clone()
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = run_protocol(a, b, &cfg, initial, Some(dir))?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Loads every `report.json` under `dir`, sorted by path.
pub fn collect_reports(dir: &Path) -> Result<Vec<(PathBuf, ProtocolReport)>> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == "report.json")
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok((p, ProtocolReport::from_json(&text)?))
        })
        .collect()
}

/// Same order as [`AblationGrid::cells`].
pub fn sort_reports(reports: &mut [ProtocolReport]) {
    reports.sort_by(|x, y| {
        y.lr.total_cmp(&x.lr)
            .then(x.epochs.cmp(&y.epochs))
            .then_with(|| x.pair.cmp(&y.pair))
    });
}

/// Writes `<out_stem>.csv` (timestamp, actual, predicted) and `<out_stem>.svg`
/// for test window `window_index`. Predicted cells are empty over the context.
pub fn emit_forecast_plot(
    dataset: &PreparedDataset,
    model: &dyn Forecast,
    wcfg: &WindowConfig,
    window_index: usize,
    out_stem: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let windows = dataset.eval_windows(Region::Test, wcfg)?;
    if window_index >= windows.len() {
        return Err(Error::NoWindows(format!(
            "window {window_index} requested, {} has {} test windows",
            dataset.id,
            windows.len()
        )));
    }
    let row = windows.contexts.slice(ndarray::s![window_index..window_index + 1, ..]);
    let forecast = model.forecast_batch(row)?;
    let start = windows.target_starts[window_index] - wcfg.context_len;
    let total = wcfg.context_len + wcfg.horizon;
    let actual = &dataset.standardized[start..start + total];
    let predicted = forecast.row(0).to_vec();

    let mut csv = String::from("timestamp,actual,predicted\n");
    for (i, a) in actual.iter().enumerate() {
        let t = dataset.series.timestamps[start + i].format(TIMESTAMP_FORMAT);
        let p = i
            .checked_sub(wcfg.context_len)
            .map(|j| predicted[j].to_string())
            .unwrap_or_default();
        let _ = writeln!(csv, "{t},{a},{p}");
    }
    let title = format!(
        "{} test window {window_index} (from {})",
        dataset.id,
        dataset.series.timestamps[start].format(TIMESTAMP_FORMAT)
    );
    let svg = render_svg(&title, actual, &predicted, wcfg.context_len);

    let csv_path = out_stem.with_extension("csv");
    let svg_path = out_stem.with_extension("svg");
    if let Some(parent) = out_stem.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render_svg(title: &str, actual: &[f64], predicted: &[f64], offset: usize) -> String {
    const W: f64 = 800.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    let n = actual.len().max(2);
    let (lo, hi) = actual
        .iter()
        .chain(predicted)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let points = |vals: &[f64], start: usize| {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(start + i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape_xml(title)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="#444"/>"##,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(s, r##"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="#444"/>"##, H - PAD);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">time step</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">value (standardized)</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{hi:.2}</text>"#,
        PAD - 4.0,
        PAD + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{lo:.2}</text>"#,
        PAD - 4.0,
        H - PAD + 4.0
    );
    let _ = writeln!(
        s,
        r##"<line x1="{0:.2}" y1="{PAD}" x2="{0:.2}" y2="{1}" stroke="#bbb" stroke-dasharray="4 4"/>"##,
        x(offset),
        H - PAD
    );
    let _ = writeln!(
        s,
        r##"<polyline class="actual" fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        points(actual, 0)
    );
    let _ = writeln!(
        s,
        r##"<polyline class="predicted" fill="none" stroke="#d62728" stroke-width="1.5" points="{}"/>"##,
        points(predicted, offset)
    );
    s.push_str("</svg>\n");
    s
}

/// Title for a pair as it appears in tables.
pub fn experiment_label(a: &str, b: &str) -> String {
    pair_label(a, b)
}
