use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forgetbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgetbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"{"lr": 1e-3, "epochs": 1, "context_len": 64, "horizon": 32, "patch_len": 16,
    "embed_dim": 16, "hidden_dim": 64, "n_blocks": 1}"#;

#[test]
fn gen_data_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let all = dir.path().join("all");
    assert!(forgetbench(&["gen-data", "--out", p(&all), "--seed", "4"]).status.success());
    for d in ["d1", "d2", "d3", "d4"] {
        let text = fs::read_to_string(all.join(format!("{d}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 2689, "{d}");
        assert!(text.lines().nth(1).unwrap().starts_with("2000-01-01 00:00:00,"));
    }
    assert!(all.join("manifest.json").is_file());

    let one = dir.path().join("one");
    assert!(forgetbench(&["gen-data", "--out", p(&one), "--seed", "4", "--datasets", "d2"]).status.success());
    let csvs: Vec<_> = fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(csvs, vec!["d2.csv"]);
    assert_eq!(fs::read(one.join("d2.csv")).unwrap(), fs::read(all.join("d2.csv")).unwrap());

    let out = forgetbench(&["gen-data", "--out", p(&one), "--datasets", "d9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn protocol_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(forgetbench(&["gen-data", "--out", p(&data), "--datasets", "d1,d2"]).status.success());
    let config = dir.path().join("small.json");
    fs::write(&config, SMALL).unwrap();
    let run = dir.path().join("run");
    let out = forgetbench(&[
        "protocol", "--a", p(&data.join("d1.csv")), "--b", p(&data.join("d2.csv")),
        "--config", p(&config), "--out", p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for col in ["Stage one", "Stage two", "BWT", "d1 → d2"] {
        assert!(stdout.contains(col), "{stdout}");
    }
    for f in ["report.json", "results.csv", "results.md", "stage1.ckpt", "stage2.ckpt", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    // lr was not given: the manifest records the resolved default
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved_config"]["lr"], 1e-3);
    assert_eq!(manifest["resolved_config"]["eval_stride"], 32);

    let same = forgetbench(&[
        "protocol", "--a", p(&data.join("d1.csv")), "--b", p(&data.join("d1.csv")), "--out", p(&dir.path().join("x")),
    ]);
    assert_eq!(same.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&same.stderr).contains("datasets must differ"));

    let report = forgetbench(&["report", "--in", p(&run), "--plot", "d1:0"]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    assert!(run.join("plots/d1_w0.svg").is_file() && run.join("plots/d1_w0.csv").is_file());
    assert_eq!(fs::read_to_string(run.join("plots/d1_w0.csv")).unwrap().lines().count(), 97);

    assert_eq!(forgetbench(&["report", "--in", p(&run), "--plot", "d1:99"]).status.code(), Some(2));
    assert_eq!(forgetbench(&["report", "--in", p(&run), "--plot", "nope"]).status.code(), Some(2));
}

#[test]
fn default_config_resolves_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("partial.json");
    fs::write(&cfg, r#"{"epochs": 1}"#).unwrap();
    let resolved = forgetbench::config::ExperimentConfig::load(&cfg).unwrap();
    assert_eq!(resolved.lr, 1e-4);
    assert_eq!(resolved.batch_size, 64);
    assert_eq!(resolved.eval_stride, Some(128));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(forgetbench(&["report", "--in", p(&empty)]).status.code(), Some(2));

    let grid = dir.path().join("grid.json");
    fs::write(&grid, r#"{"learning_rates": [], "epoch_counts": [1], "pairs": [["D1", "D2"]]}"#).unwrap();
    assert_eq!(forgetbench(&["ablate", "--grid", p(&grid), "--out", p(&dir.path().join("o"))]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.json");
    fs::write(&bad_cfg, r#"{"learning_rate": 1e-3}"#).unwrap();
    let out = forgetbench(&["protocol", "--a", "a.csv", "--b", "b.csv", "--config", p(&bad_cfg), "--out", p(&empty)]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(forgetbench(&["protocol", "--a", "x.csv"]).status.code(), Some(2));
    assert_eq!(forgetbench(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn pretrain_checkpoint_feeds_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let ckpt = dir.path().join("ckpt/generalist.ckpt");
    let out = forgetbench(&["pretrain", "--pool", "1", "--seed", "2", "--config", p(&cfg), "--out", p(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(&ckpt).unwrap();
    assert_eq!(&bytes[..8], b"FBCKPT01");

    let data = dir.path().join("data");
    assert!(forgetbench(&["gen-data", "--out", p(&data), "--datasets", "d3,d4"]).status.success());
    let with_init = dir.path().join("init.json");
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    v["initial_checkpoint"] = p(&ckpt).into();
    fs::write(&with_init, v.to_string()).unwrap();
    let run = dir.path().join("run");
    let out = forgetbench(&[
        "protocol", "--a", p(&data.join("d3.csv")), "--b", p(&data.join("d4.csv")),
        "--config", p(&with_init), "--out", p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (params, _) = forgetbench::checkpoint::load_checkpoint(&ckpt).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stage1"]["start_fingerprint"], params.fingerprint());

    assert_eq!(forgetbench(&["pretrain", "--pool", "0", "--out", p(&ckpt)]).status.code(), Some(2));
}
