//! `forgetbench` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::continual::{pretrain_generalist, run_protocol};
use crate::error::Error;
use crate::forecaster::ModelConfig;
use crate::pipeline::{read_csv, write_csv, PreparedDataset};
use crate::report::{
    collect_reports, emit_forecast_plot, load_recorded_dataset, render_markdown, rows_from_reports, run_grid,
    sort_reports, write_tables, AblationGrid,
};
use crate::synthgen::{generate_series, BuiltinDataset, GenerationConfig};

#[derive(Debug, Parser)]
#[command(name = "forgetbench", version, about = "Catastrophic forgetting benchmark for forecasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the built-in datasets as `date,values` CSV files.
    GenData(GenDataArgs),
    /// Run the two-stage fine-tuning protocol on a pair of CSV series.
    Protocol(ProtocolArgs),
    /// Run a learning-rate / epoch ablation grid.
    Ablate(AblateArgs),
    /// Re-render tables (and optionally plots) from saved reports.
    Report(ReportArgs),
    /// Train a generic starting checkpoint on random multi-sine signals.
    Pretrain(PretrainArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated subset, e.g. `d1,d3`.
    #[arg(long, value_delimiter = ',', default_value = "d1,d2,d3,d4")]
    pub datasets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `dataset:window`, e.g. `d1:0`; may be repeated.
    #[arg(long)]
    pub plot: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub pool: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Written next to every output as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config_path: Option<&'a Path>,
    pub resolved_config: serde_json::Value,
    pub tool_version: &'static str,
    pub created_at: String,
}

fn write_manifest(dir: &Path, command: &str, config_path: Option<&Path>, resolved: impl Serialize) -> Result<(), Error> {
    let manifest = RunManifest {
        command,
        config_path,
        resolved_config: serde_json::to_value(resolved).expect("config serializes"),
        tool_version: env!("CARGO_PKG_VERSION"),
        created_at: chrono::Utc::now().to_rfc3339(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default().resolved()),
    }
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), Failure> {
    let names = args
        .datasets
        .iter()
        .map(|d| d.parse::<BuiltinDataset>())
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(&args.out)?;
    let gen = GenerationConfig::default();
    for name in &names {
        let series = generate_series(&name.spec(args.seed), &gen)?;
        let path = args.out.join(format!("{}.csv", name.name().to_ascii_lowercase()));
        write_csv(&series, &path).map_err(|e| match e {
            Error::Io { .. } => usage(e.to_string()),
            other => other.into(),
        })?;
        println!("wrote {}", path.display());
    }
    #[derive(Serialize)]
    struct Resolved<'a> {
        seed: u64,
        datasets: &'a [BuiltinDataset],
        generation: &'a GenerationConfig,
    }
    write_manifest(
        &args.out,
        "gen-data",
        None,
        Resolved {
            seed: args.seed,
            datasets: &names,
            generation: &gen,
        },
    )?;
    Ok(())
}

fn dataset_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn protocol(args: &ProtocolArgs) -> Result<(), Failure> {
    let same_file = match (fs::canonicalize(&args.a), fs::canonicalize(&args.b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => args.a == args.b,
    };
    if same_file {
        return Err(usage("datasets must differ"));
    }
    let cfg = load_config(args.config.as_deref())?;
    let wcfg = cfg.window_config();
    let load = |path: &Path, fallback: &str| -> Result<PreparedDataset, Failure> {
        let series = read_csv(path).map_err(|e| usage(e.to_string()))?;
        let mut id = dataset_id(path);
        if id.is_empty() {
            id = fallback.to_string();
        }
        Ok(PreparedDataset::new(id, series, &wcfg)?.with_source(path.display().to_string()))
    };
    let a = load(&args.a, "A")?;
    let mut b = load(&args.b, "B")?;
    if a.id == b.id {
        b.id = format!("{} (B)", b.id);
    }
    let initial = match &cfg.initial_checkpoint {
        Some(p) => Some(load_checkpoint(p).map_err(|e| usage(e.to_string()))?.0),
        None => None,
    };

    create_dir(&args.out)?;
    write_manifest(&args.out, "protocol", args.config.as_deref(), &cfg)?;
    let report = run_protocol(&a, &b, &cfg, initial, Some(&args.out))?;
    let path = args.out.join("report.json");
    fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
    let rows = rows_from_reports(std::slice::from_ref(&report));
    write_tables(&rows, &args.out)?;
    print!("{}", render_markdown(&rows));
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.grid).map_err(|e| usage(format!("{}: {e}", args.grid.display())))?;
    let grid = AblationGrid::from_json(&text)?;
    create_dir(&args.out)?;
    write_manifest(&args.out, "ablate", Some(&args.grid), &grid)?;
    let outcome = run_grid(&grid, &args.out)?;
    print!("{}", render_markdown(&outcome.rows));
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for f in &outcome.failures {
            eprintln!("cell {} failed: {}", f.cell, f.error);
        }
        Err(Failure {
            code: 1,
            message: format!("{} of {} cells failed", outcome.failures.len(), grid.cells().len()),
        })
    }
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let found = collect_reports(&args.input).map_err(|e| usage(e.to_string()))?;
    if found.is_empty() {
        return Err(usage(format!("no report.json under {}", args.input.display())));
    }
    let mut located = found;
    let mut reports: Vec<_> = located.iter().map(|(_, r)| r.clone()).collect();
    sort_reports(&mut reports);
    let rows = rows_from_reports(&reports);
    write_tables(&rows, &args.input)?;
    print!("{}", render_markdown(&rows));

    for spec in &args.plot {
        let (name, window) = spec
            .split_once(':')
            .and_then(|(n, w)| Some((n, w.parse::<usize>().ok()?)))
            .ok_or_else(|| usage(format!("--plot expects dataset:window, got `{spec}`")))?;
        sort_located(&mut located);
        let (path, rep) = located
            .iter()
            .find(|(_, r)| r.dataset_a().eq_ignore_ascii_case(name) || r.dataset_b().eq_ignore_ascii_case(name))
            .ok_or_else(|| usage(format!("no report covers dataset `{name}`")))?;
        let info = if rep.dataset_a().eq_ignore_ascii_case(name) {
            &rep.datasets.a
        } else {
            &rep.datasets.b
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        let ckpt = rep
            .stage2
            .checkpoint
            .as_ref()
            .ok_or_else(|| usage("report has no stage-two checkpoint"))?;
        let (params, _) = load_checkpoint(&dir.join(ckpt))?;
        let dataset = load_recorded_dataset(&info.id, &info.source, &rep.window)?;
        let stem = args
            .input
            .join("plots")
            .join(format!("{}_w{window}", name.to_ascii_lowercase()));
        let (csv, svg) = emit_forecast_plot(&dataset, &params, &rep.window, window, &stem).map_err(|e| match e {
            Error::NoWindows(_) => usage(e.to_string()),
            other => other.into(),
        })?;
        eprintln!("wrote {} and {}", csv.display(), svg.display());
    }
    Ok(())
}

fn sort_located(located: &mut [(PathBuf, crate::continual::ProtocolReport)]) {
    located.sort_by(|(pa, a), (pb, b)| {
        b.lr.total_cmp(&a.lr)
            .then(a.epochs.cmp(&b.epochs))
            .then_with(|| a.pair.cmp(&b.pair))
            .then_with(|| pa.cmp(pb))
    });
}

pub fn pretrain(args: &PretrainArgs) -> Result<(), Failure> {
    if args.pool == 0 {
        return Err(usage("--pool must be at least 1"));
    }
    let cfg = load_config(args.config.as_deref())?;
    let params = pretrain_generalist(args.pool, args.seed, &cfg)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_checkpoint(&params, &args.out)?;
    let summary: ModelConfig = params.config;
    println!(
        "wrote {} ({} parameters, {}→{})",
        args.out.display(),
        params.num_params(),
        summary.context_len,
        summary.horizon
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Protocol(a) => protocol(a),
        Command::Ablate(a) => ablate(a),
        Command::Report(a) => report(a),
        Command::Pretrain(a) => pretrain(a),
    }
}

/// Parses `std::env::args` and maps the outcome onto the exit-code contract.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
