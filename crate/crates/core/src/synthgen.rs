//! Multi-sinusoidal signal generation and the four built-in datasets.
//!
//! A signal is `f(x) = Σ sin(2π·x/period + phase)` with `x` counted in time
//! steps. Phases sit on a grid of `phase_div` equally spaced angles and are
//! drawn from a seeded [`SeededRng`].

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::TimeSeries;
use crate::rng::SeededRng;

pub const DEFAULT_PHASE_DIV: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub period: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub components: Vec<SineComponent>,
    pub phase_div: u32,
    pub seed: u64,
}

impl SignalSpec {
    pub fn periods(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.period).collect()
    }

    /// Value of the composite signal at time-step `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| (TAU * x / c.period + c.phase).sin())
            .sum()
    }
}

/// Draws one grid phase per period: `phase = 2π·k/phase_div`, `k` uniform.
pub fn sample_phases(periods: &[f64], phase_div: u32, seed: u64) -> Result<SignalSpec> {
    if periods.is_empty() {
        return Err(Error::InvalidSpec("period list is empty".into()));
    }
    if let Some(p) = periods.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidSpec(format!("period must be positive, got {p}")));
    }
    if phase_div == 0 {
        return Err(Error::InvalidSpec("phase_div must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let components = periods
        .iter()
        .map(|&period| {
            let k = rng.below(phase_div as u64);
            SineComponent {
                period,
                phase: grid_phase(k, phase_div),
            }
        })
        .collect();
    Ok(SignalSpec {
        components,
        phase_div,
        seed,
    })
}

pub fn grid_phase(k: u64, phase_div: u32) -> f64 {
    TAU * k as f64 / phase_div as f64
}

pub fn eval_signal(spec: &SignalSpec, x: f64) -> f64 {
    spec.eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_steps: usize,
    pub start: NaiveDateTime,
    pub step_minutes: u32,
}

impl Default for GenerationConfig {
    /// 2688 half-hourly points (eight weeks) from 2000-01-01 00:00.
    fn default() -> Self {
        Self {
            n_steps: 2688,
            start: NaiveDate::from_ymd_opt(2000, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            step_minutes: 30,
        }
    }
}

pub fn generate_series(spec: &SignalSpec, cfg: &GenerationConfig) -> Result<TimeSeries> {
    if cfg.n_steps == 0 {
        return Err(Error::InvalidSpec("n_steps must be at least 1".into()));
    }
    if cfg.step_minutes == 0 {
        return Err(Error::InvalidSpec("step_minutes must be at least 1".into()));
    }
    let step = TimeDelta::minutes(cfg.step_minutes as i64);
    let mut timestamps = Vec::with_capacity(cfg.n_steps);
    let mut t = cfg.start;
    for i in 0..cfg.n_steps {
        if i > 0 {
            t = t
                .checked_add_signed(step)
                .ok_or(Error::TimestampOverflow(i))?;
        }
        timestamps.push(t);
    }
    let values = (0..cfg.n_steps).map(|i| spec.eval(i as f64)).collect();
    TimeSeries::new(timestamps, values, cfg.step_minutes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BuiltinDataset {
    D1,
    D2,
    D3,
    D4,
}

impl BuiltinDataset {
    pub const ALL: [BuiltinDataset; 4] = [Self::D1, Self::D2, Self::D3, Self::D4];

    pub fn periods(self) -> &'static [f64] {
        match self {
            Self::D1 => &[21.0, 84.0, 336.0, 2688.0],
            Self::D2 => &[42.0, 168.0, 1344.0],
            Self::D3 => &[
                1260.0, 296.0, 1114.0, 1120.0, 325.0, 458.0, 105.0, 67.0, 911.0, 522.0,
            ],
            Self::D4 => &[
                674.0, 570.0, 71.0, 726.0, 709.0, 1127.0, 226.0, 1198.0, 1282.0, 358.0,
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::D1 => "D1",
            Self::D2 => "D2",
            Self::D3 => "D3",
            Self::D4 => "D4",
        }
    }

    pub fn spec(self, seed: u64) -> SignalSpec {
        sample_phases(self.periods(), DEFAULT_PHASE_DIV, seed).expect("built-in periods are valid")
    }
}

impl fmt::Display for BuiltinDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" => Ok(Self::D1),
            "D2" => Ok(Self::D2),
            "D3" => Ok(Self::D3),
            "D4" => Ok(Self::D4),
            _ => Err(Error::UnknownDataset(s.to_string())),
        }
    }
}

/// Spec for a named built-in dataset, phases drawn with `phase_div = 12`.
pub fn builtin_spec(name: &str, seed: u64) -> Result<SignalSpec> {
    Ok(name.parse::<BuiltinDataset>()?.spec(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn spec_with(components: &[(f64, f64)]) -> SignalSpec {
        SignalSpec {
            components: components
                .iter()
                .map(|&(period, phase)| SineComponent { period, phase })
                .collect(),
            phase_div: 12,
            seed: 0,
        }
    }

    #[test]
    fn grid_phase_three_of_twelve_is_quarter_turn() {
        assert!((grid_phase(3, 12) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sampled_phases_lie_on_grid() {
        let spec = sample_phases(&[21.0, 84.0, 336.0, 2688.0], 12, 99).unwrap();
        assert_eq!(spec.components.len(), 4);
        for c in &spec.components {
            let k = c.phase / TAU * 12.0;
            assert!((k - k.round()).abs() < 1e-12);
            assert!((0.0..12.0).contains(&k.round()));
        }
    }

    #[test]
    fn sample_phases_is_deterministic() {
        let a = sample_phases(&[5.0, 7.0, 9.0], 12, 42).unwrap();
        let b = sample_phases(&[5.0, 7.0, 9.0], 12, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_phases_rejects_bad_input() {
        assert!(sample_phases(&[], 12, 0).is_err());
        assert!(sample_phases(&[4.0, 0.0], 12, 0).is_err());
        assert!(sample_phases(&[4.0, -3.0], 12, 0).is_err());
        assert!(sample_phases(&[4.0], 0, 0).is_err());
    }

    #[test]
    fn zero_phase_signal_starts_at_zero() {
        let spec = spec_with(&[(7.0, 0.0), (13.0, 0.0)]);
        assert_eq!(eval_signal(&spec, 0.0), 0.0);
    }

    #[test]
    fn quarter_phase_single_sine_is_one_at_origin() {
        let spec = spec_with(&[(4.0, FRAC_PI_2)]);
        assert_eq!(eval_signal(&spec, 0.0), 1.0);
    }

    #[test]
    fn d1_repeats_every_2688_steps() {
        let spec = builtin_spec("D1", 5).unwrap();
        for x in 0..500 {
            let x = x as f64;
            assert!((spec.eval(x + 2688.0) - spec.eval(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn generated_series_timestamps_end_on_feb_25() {
        let spec = builtin_spec("D1", 0).unwrap();
        let series = generate_series(&spec, &GenerationConfig::default()).unwrap();
        assert_eq!(series.len(), 2688);
        // 2687 * 30 min = 55 days 23 h 30 min after 2000-01-01 00:00
        let expected = NaiveDate::from_ymd_opt(2000, 2, 25)
            .unwrap()
            .and_hms_opt(23, 30, 0)
            .unwrap();
        assert_eq!(*series.timestamps.last().unwrap(), expected);
    }

    #[test]
    fn generated_values_match_eval() {
        let spec = builtin_spec("D3", 1).unwrap();
        let series = generate_series(&spec, &GenerationConfig::default()).unwrap();
        assert!(series.values.iter().all(|v| v.abs() <= 10.0));
        assert_eq!(series.values[17], spec.eval(17.0));
    }

    #[test]
    fn absurd_length_overflows_timestamps() {
        let spec = spec_with(&[(4.0, 0.0)]);
        let cfg = GenerationConfig {
            n_steps: 2_000_000,
            start: NaiveDate::from_ymd_opt(262_000, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            step_minutes: 60 * 24 * 365,
        };
        assert!(matches!(
            generate_series(&spec, &cfg),
            Err(Error::TimestampOverflow(_))
        ));
    }

    #[test]
    fn builtin_periods_and_errors() {
        let d2 = builtin_spec("D2", 0).unwrap();
        assert_eq!(d2.periods(), vec![42.0, 168.0, 1344.0]);
        assert_eq!(builtin_spec("d4", 0).unwrap().components.len(), 10);
        assert!(matches!(
            builtin_spec("D5", 0),
            Err(Error::UnknownDataset(_))
        ));
    }
}
