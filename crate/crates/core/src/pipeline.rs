//! Series I/O, chronological splits, standardization and sliding windows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Uniformly sampled, timestamped values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
    pub step_minutes: u32,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, values: Vec<f64>, step_minutes: u32) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} timestamps vs {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if step_minutes == 0 {
            return Err(Error::InvalidSpec("step_minutes must be positive".into()));
        }
        let step = TimeDelta::minutes(step_minutes as i64);
        if let Some(i) = timestamps.windows(2).position(|w| w[1] - w[0] != step) {
            return Err(Error::InvalidSpec(format!(
                "timestamps not uniformly spaced at row {}",
                i + 1
            )));
        }
        Ok(Self {
            timestamps,
            values,
            step_minutes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Writes `date,values` with 17 significant digits per value.
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "date,values")?;
        for (t, v) in series.timestamps.iter().zip(&series.values) {
            writeln!(out, "{},{:.16e}", t.format(TIMESTAMP_FORMAT), v)?;
        }
        out.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<TimeSeries> {
    let bad = |msg: String| Error::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => bad(format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "values" {
        return Err(bad(format!(
            "expected header `date,values`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != 2 {
            return Err(bad(format!("line {line}: expected 2 fields")));
        }
        let t = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
            .map_err(|e| bad(format!("line {line}: bad timestamp `{}`: {e}", &record[0])))?;
        let v: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("line {line}: unparseable value `{}`", &record[1])))?;
        timestamps.push(t);
        values.push(v);
    }
    if timestamps.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let step_minutes = match timestamps.get(1) {
        Some(t1) => {
            let delta = (*t1 - timestamps[0]).num_seconds();
            if delta <= 0 || delta % 60 != 0 {
                return Err(bad("timestamps must increase by whole minutes".into()));
            }
            u32::try_from(delta / 60).map_err(|_| bad("step too large".into()))?
        }
        None => 30,
    };
    TimeSeries::new(timestamps, values, step_minutes).map_err(|e| bad(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
        }
    }
}

/// Train is `[0, train_end)`, validation `[train_end, val_end)`, test `[val_end, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_end: usize,
    pub val_end: usize,
    pub n: usize,
}

impl SplitIndices {
    pub fn region(&self, region: Region) -> (usize, usize) {
        match region {
            Region::Train => (0, self.train_end),
            Region::Val => (self.train_end, self.val_end),
            Region::Test => (self.val_end, self.n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Train,
    Val,
    Test,
}

/// `floor(frac * n)`, robust to products like `0.7 * 100` landing a hair low.
fn floor_fraction(frac: f64, n: usize) -> usize {
    (frac * n as f64 + 1e-9).floor() as usize
}

pub fn split_series(n: usize, fractions: SplitFractions, wcfg: &WindowConfig) -> Result<SplitIndices> {
    let min = wcfg.context_len + wcfg.horizon + 2;
    if n < min {
        return Err(Error::TooShort(format!(
            "{n} points, need at least {min} for context {} + horizon {}",
            wcfg.context_len, wcfg.horizon
        )));
    }
    if !(fractions.train > 0.0 && fractions.val > 0.0 && fractions.train + fractions.val < 1.0) {
        return Err(Error::Config(format!("invalid split fractions {fractions:?}")));
    }
    let train_end = floor_fraction(fractions.train, n);
    let val_end = train_end + floor_fraction(fractions.val, n);
    if train_end == 0 || val_end <= train_end || val_end >= n {
        return Err(Error::TooShort(format!("{n} points leave an empty split")));
    }
    Ok(SplitIndices {
        train_end,
        val_end,
        n,
    })
}

/// Standardization statistics (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooShort("scaler fit range is empty".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateScaler);
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn inverse_transform(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.std + self.mean).collect()
    }
}

pub fn fit_scaler(series: &TimeSeries, range: std::ops::Range<usize>) -> Result<Scaler> {
    let slice = series
        .values
        .get(range.clone())
        .ok_or_else(|| Error::TooShort(format!("range {range:?} outside series")))?;
    Scaler::fit(slice)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub context_len: usize,
    pub horizon: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            context_len: 256,
            horizon: 128,
            train_stride: 1,
            eval_stride: 128,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.horizon == 0 || self.train_stride == 0 || self.eval_stride == 0 {
            return Err(Error::Config(format!("window lengths and strides must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Aligned (context, target) pairs cut from one series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub contexts: Array2<f64>,
    pub targets: Array2<f64>,
    pub target_starts: Vec<usize>,
}

impl WindowSet {
    fn from_starts(values: &[f64], starts: Vec<usize>, wcfg: &WindowConfig) -> Self {
        let (l, h) = (wcfg.context_len, wcfg.horizon);
        let n = starts.len();
        let contexts = Array2::from_shape_fn((n, l), |(r, c)| values[starts[r] - l + c]);
        let targets = Array2::from_shape_fn((n, h), |(r, c)| values[starts[r] + c]);
        Self {
            contexts,
            targets,
            target_starts: starts,
        }
    }

    pub fn len(&self) -> usize {
        self.target_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_starts.is_empty()
    }

    /// Concatenates several window sets; all must share window lengths.
    pub fn concat(sets: &[WindowSet]) -> Result<WindowSet> {
        let first = sets.first().ok_or_else(|| Error::NoWindows("nothing to concatenate".into()))?;
        let (l, h) = (first.contexts.ncols(), first.targets.ncols());
        if sets.iter().any(|s| s.contexts.ncols() != l || s.targets.ncols() != h) {
            return Err(Error::ShapeMismatch("window sets differ in length".into()));
        }
        let ctx_views: Vec<_> = sets.iter().map(|s| s.contexts.view()).collect();
        let tgt_views: Vec<_> = sets.iter().map(|s| s.targets.view()).collect();
        Ok(WindowSet {
            contexts: ndarray::concatenate(ndarray::Axis(0), &ctx_views)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            targets: ndarray::concatenate(ndarray::Axis(0), &tgt_views)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            target_starts: sets.iter().flat_map(|s| s.target_starts.iter().copied()).collect(),
        })
    }
}

/// Windows whose context and target both lie inside the train region.
pub fn make_train_windows(values: &[f64], split: &SplitIndices, wcfg: &WindowConfig) -> Result<WindowSet> {
    wcfg.validate()?;
    let (l, h) = (wcfg.context_len, wcfg.horizon);
    let end = split.train_end.min(values.len());
    if end < l + h {
        return Err(Error::NoWindows(format!(
            "train region of {end} points cannot hold context {l} + horizon {h}"
        )));
    }
    let starts = (l..=end - h).step_by(wcfg.train_stride).collect();
    Ok(WindowSet::from_starts(values, starts, wcfg))
}

/// Windows whose target lies inside `region`; the context may reach back
/// into earlier regions. Targets start at the region's first index and
/// advance by `eval_stride`.
pub fn make_eval_windows(
    values: &[f64],
    split: &SplitIndices,
    region: Region,
    wcfg: &WindowConfig,
) -> Result<WindowSet> {
    wcfg.validate()?;
    let (l, h) = (wcfg.context_len, wcfg.horizon);
    let (lo, hi) = split.region(region);
    let hi = hi.min(values.len());
    if lo < l {
        return Err(Error::NoWindows(format!(
            "{region:?} region starts at {lo}, before a full context of {l} is available"
        )));
    }
    if hi < lo + h {
        return Err(Error::NoWindows(format!(
            "{region:?} region [{lo}, {hi}) shorter than horizon {h}"
        )));
    }
    let starts = (lo..=hi - h).step_by(wcfg.eval_stride).collect();
    Ok(WindowSet::from_starts(values, starts, wcfg))
}

/// A series with its split, train-fit scaler and standardized values.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub id: String,
    /// Where the series came from (file path or generator tag).
    pub source: String,
    pub series: TimeSeries,
    pub split: SplitIndices,
    pub scaler: Scaler,
    pub standardized: Vec<f64>,
}

impl PreparedDataset {
    pub fn new(id: impl Into<String>, series: TimeSeries, wcfg: &WindowConfig) -> Result<Self> {
        let split = split_series(series.len(), SplitFractions::default(), wcfg)?;
        let scaler = fit_scaler(&series, 0..split.train_end)?;
        let standardized = scaler.transform(&series.values);
        Ok(Self {
            id: id.into(),
            source: String::from("memory"),
            series,
            split,
            scaler,
            standardized,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn train_windows(&self, wcfg: &WindowConfig) -> Result<WindowSet> {
        make_train_windows(&self.standardized, &self.split, wcfg)
    }

    pub fn eval_windows(&self, region: Region, wcfg: &WindowConfig) -> Result<WindowSet> {
        make_eval_windows(&self.standardized, &self.split, region, wcfg)
    }
}
