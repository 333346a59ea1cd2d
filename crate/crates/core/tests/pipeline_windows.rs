mod common;

use std::fs;

use chrono::{NaiveDate, TimeDelta};
use common::{brute_eval_starts, brute_train_starts};
use forgetbench::pipeline::{
    fit_scaler, make_eval_windows, make_train_windows, read_csv, split_series, write_csv, PreparedDataset, Region,
    SplitFractions, TimeSeries, WindowConfig,
};
use forgetbench::synthgen::{builtin_spec, generate_series, GenerationConfig};
use forgetbench::Error;
use proptest::prelude::*;

fn d1() -> TimeSeries {
    generate_series(&builtin_spec("D1", 0).unwrap(), &GenerationConfig::default()).unwrap()
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d1.csv");
    let series = d1();
    write_csv(&series, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back, series);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("date,values"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("2000-01-01 00:00:00,"), "{first}");
    let v: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v, series.values[0]);
    assert_eq!(text.lines().count(), 2689);
}

#[test]
fn csv_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");

    assert!(matches!(read_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));

    fs::write(&p, "time,value\n2000-01-01 00:00:00,1.0\n").unwrap();
    let err = read_csv(&p).unwrap_err();
    assert!(err.to_string().contains("header"), "{err}");

    fs::write(&p, "date,values\n2000-01-01 00:00:00,1.0\n2000-01-01 00:30:00,abc\n").unwrap();
    assert!(read_csv(&p).unwrap_err().to_string().contains("unparseable"));

    fs::write(
        &p,
        "date,values\n2000-01-01 00:00:00,1\n2000-01-01 00:30:00,2\n2000-01-01 01:30:00,3\n",
    )
    .unwrap();
    assert!(read_csv(&p).unwrap_err().to_string().contains("uniformly"));
}

#[test]
fn scaler_round_trip_on_d1_train_region() {
    let series = d1();
    let split = split_series(series.len(), SplitFractions::default(), &WindowConfig::default()).unwrap();
    let scaler = fit_scaler(&series, 0..split.train_end).unwrap();
    let train = &series.values[..split.train_end];
    let back = scaler.inverse_transform(&scaler.transform(train));
    for (a, b) in train.iter().zip(&back) {
        assert!((a - b).abs() < 1e-12);
    }
    let z = scaler.transform(train);
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
}

#[test]
fn prepared_dataset_uses_train_statistics_and_keeps_source() {
    let series = d1();
    let ds = PreparedDataset::new("D1", series.clone(), &WindowConfig::default()).unwrap();
    assert_eq!(ds.series, series);
    let manual = fit_scaler(&series, 0..1881).unwrap();
    assert_eq!(ds.scaler, manual);
    assert_eq!(ds.standardized[2000], (series.values[2000] - manual.mean) / manual.std);
}

#[test]
fn constant_series_cannot_be_standardized() {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts = (0..500).map(|i| start + TimeDelta::minutes(30 * i)).collect();
    let s = TimeSeries::new(ts, vec![4.0; 500], 30).unwrap();
    let w = WindowConfig { context_len: 16, horizon: 8, train_stride: 1, eval_stride: 8 };
    assert!(matches!(PreparedDataset::new("c", s, &w), Err(Error::DegenerateScaler)));
}

proptest! {
    #[test]
    fn window_starts_match_brute_force(
        n in 20usize..400,
        context in 1usize..20,
        horizon in 1usize..12,
        train_stride in 1usize..5,
        eval_stride in 1usize..9,
    ) {
        let w = WindowConfig { context_len: context, horizon, train_stride, eval_stride };
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let Ok(split) = split_series(n, SplitFractions::default(), &w) else {
            prop_assume!(false);
            unreachable!()
        };
        let brute = brute_train_starts(split.train_end, context, horizon, train_stride);
        match make_train_windows(&values, &split, &w) {
            Ok(ws) => {
                prop_assert_eq!(&ws.target_starts, &brute);
                for (r, &s) in ws.target_starts.iter().enumerate() {
                    // context ends right before the target; nothing crosses train_end
                    prop_assert_eq!(ws.contexts[[r, context - 1]], (s - 1) as f64);
                    prop_assert!(s + horizon <= split.train_end);
                }
            }
            Err(_) => prop_assert!(brute.is_empty()),
        }
        for region in [Region::Val, Region::Test] {
            let (lo, hi) = split.region(region);
            match make_eval_windows(&values, &split, region, &w) {
                Ok(ws) => {
                    prop_assert_eq!(&ws.target_starts, &brute_eval_starts(lo, hi, horizon, eval_stride));
                    for (r, &s) in ws.target_starts.iter().enumerate() {
                        prop_assert_eq!(ws.targets[[r, 0]], s as f64);
                        prop_assert_eq!(ws.contexts[[r, context - 1]], (s - 1) as f64);
                    }
                }
                Err(_) => prop_assert!(lo < context || brute_eval_starts(lo, hi, horizon, eval_stride).is_empty()),
            }
        }
    }

    #[test]
    fn split_follows_floor_rule(n in 400usize..20_000) {
        let s = split_series(n, SplitFractions::default(), &WindowConfig::default()).unwrap();
        prop_assert_eq!(s.train_end, n * 70 / 100);
        prop_assert_eq!(s.val_end - s.train_end, n * 15 / 100);
        prop_assert!(0 < s.train_end && s.train_end < s.val_end && s.val_end < n);
    }
}
