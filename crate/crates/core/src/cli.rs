//! The `rpf` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{analyze, compare_reports, comparison_csv, histograms_svg, AnalysisReport};
use crate::checkpoint::{load_checkpoint, load_meta, sidecar_path, Checkpoint};
use crate::config::KvConfig;
use crate::data::{
    generate_benchmark, load_benchmark, save_benchmark, write_manifest, BenchmarkBundle, BenchmarkConfig,
    MANIFEST_FILE,
};
use crate::eval::threshold_sweep;
use crate::losses::Variant;
use crate::train::{
    run_experiment, run_jobs, write_run_dir, SuiteJob, SuiteRow, SuiteTable, TrainConfig, DEFAULT_LAMBDAS,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rpf", version, about = "Open domain generalization lab: pre-trained feature regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-domain benchmark.
    Generate(GenerateArgs),
    /// Run the full pipeline for one variant and seed.
    Train(TrainArgs),
    /// Open-set evaluation of a checkpoint on a benchmark's target domain.
    Evaluate(EvaluateArgs),
    /// Feature, logit and head diagnostics of one checkpoint, or two side by side.
    Analyze(AnalyzeArgs),
    /// Ablation suite, λ_hr sweep and threshold table over several seeds.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key=value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = ["pacs-like", "office-home-like"])]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; defaults to `runs/<variant>-s<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, required_unless_present = "compare")]
    pub checkpoint: Option<PathBuf>,
    /// Two checkpoints to compare (typically RPF then LPFT).
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "checkpoint")]
    pub compare: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
    /// Comma-separated λ_hr values for the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip writing one directory per run.
    #[arg(long)]
    pub no_run_dirs: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: Vec<String>,
    config_path: Option<&'a Path>,
    config: serde_json::Value,
    seed: Option<u64>,
    version: &'static str,
    output_dir: &'a Path,
    started_at: u64,
    finished_at: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Creates `path`, or `path-1`, `path-2`, ... when it already exists.
pub fn fresh_dir(path: &Path) -> Result<PathBuf> {
    let mut candidate = path.to_path_buf();
    let mut n = 0;
    loop {
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
                name.push(format!("-{n}"));
                candidate = path.with_file_name(name);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                fs::create_dir(&candidate).map_err(|e| Error::io(&candidate, e))?;
                return Ok(candidate);
            }
            Err(e) => return Err(Error::io(&candidate, e)),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

struct Stamp<'a> {
    command: &'a str,
    config_path: Option<&'a Path>,
    config: serde_json::Value,
    seed: Option<u64>,
    started_at: u64,
}

impl Stamp<'_> {
    fn manifest<'b>(&'b self, dir: &'b Path) -> RunManifest<'b> {
        RunManifest {
            command: self.command,
            args: std::env::args().collect(),
            config_path: self.config_path,
            config: self.config.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            output_dir: dir,
            started_at: self.started_at,
            finished_at: unix_now(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest(dir))?)
    }
}

fn load_kv(args: &ConfigArgs) -> Result<KvConfig> {
    let mut kv = match &args.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    };
    for s in &args.set {
        kv.apply_override(s)?;
    }
    Ok(kv)
}

fn train_config(args: &ConfigArgs, variant: Option<&str>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut kv = load_kv(args)?;
    if let Some(v) = variant {
        kv.set("variant", v);
    }
    if let Some(s) = seed {
        kv.set("seed", &s.to_string());
    }
    TrainConfig::from_kv(&kv)
}

fn load_checkpoint_checked(path: &Path) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if sidecar_path(path).exists() {
        load_meta(path)?;
    }
    Ok(ckpt)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let started_at = unix_now();
    let mut kv = load_kv(&args.config)?;
    if let Some(p) = &args.preset {
        kv.set("preset", p);
    }
    let cfg = BenchmarkConfig::from_kv(&kv)?;
    let bundle = generate_benchmark(&cfg, args.seed)?;
    let dir = fresh_dir(&args.out)?;
    let mut manifest = save_benchmark(&bundle, &dir)?;
    let stamp = Stamp {
        command: "generate",
        config_path: args.config.config.as_deref(),
        config: json!(cfg.to_kv().as_map()),
        seed: Some(args.seed),
        started_at,
    };
    manifest.run = Some(serde_json::to_value(stamp.manifest(&dir))?);
    write_manifest(&dir, &manifest)?;
    println!("benchmark written to {}", dir.display());
    for d in &manifest.domains {
        if d.kind != "pretext" {
            let counts: Vec<String> = d.counts.iter().map(|(r, n)| format!("{r}={n}")).collect();
            println!("  {} domain {} ({}): {}", d.kind, d.spec.domain_id, d.file, counts.join(" "));
        }
    }
    println!(
        "  known classes {:?}, open classes {:?}, pretext classes {}",
        bundle.class_split.known, bundle.class_split.open_class_ids, manifest.pretext_classes
    );
    Ok(dir)
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let started_at = unix_now();
    let cfg = train_config(&args.config, args.variant.as_deref(), args.seed)?;
    let bundle = load_benchmark(&args.bench)?;
    let exp = run_experiment(&bundle, &cfg)?;
    let default_out = PathBuf::from("runs").join(format!("{}-s{}", cfg.variant.name(), cfg.seed));
    let dir = fresh_dir(args.out.as_ref().unwrap_or(&default_out))?;
    write_run_dir(&dir, &exp, &bundle)?;
    Stamp {
        command: "train",
        config_path: args.config.config.as_deref(),
        config: json!({ "train": cfg.to_kv().as_map(), "benchmark": args.bench }),
        seed: Some(cfg.seed),
        started_at,
    }
    .write(&dir)?;
    println!(
        "{} seed {}: selected epoch {} (val acc {:.4}), Acc {:.4}, H-score {:.4} at threshold {:.4}",
        cfg.variant,
        cfg.seed,
        exp.record.selected_epoch,
        exp.record.selected_val_acc,
        exp.eval.acc_known,
        exp.eval.best_h_score,
        exp.eval.best_threshold
    );
    println!("run written to {}", dir.display());
    Ok(dir)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let started_at = unix_now();
    let ckpt = load_checkpoint_checked(&args.checkpoint)?;
    let bundle = load_benchmark(&args.bench)?;
    let report = threshold_sweep(&ckpt.state, &bundle.target)?;
    let dir = fresh_dir(&args.out)?;
    write_file(&dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    write_file(&dir.join("eval_sweep.csv"), report.sweep_csv())?;
    Stamp {
        command: "evaluate",
        config_path: None,
        config: json!({ "checkpoint": args.checkpoint, "benchmark": args.bench }),
        seed: None,
        started_at,
    }
    .write(&dir)?;
    println!("Acc {:.4}", report.acc_known);
    println!("H-score {:.4} (threshold {:.4})", report.best_h_score, report.best_threshold);
    if report.h_score_undefined {
        warn!("target lacks known or unknown samples; H-score reported as 0");
    }
    Ok(dir)
}

fn write_analysis(dir: &Path, prefix: &str, report: &AnalysisReport) -> Result<()> {
    write_file(
        &dir.join(format!("{prefix}analysis.json")),
        serde_json::to_string_pretty(report)?,
    )?;
    write_file(&dir.join(format!("{prefix}histograms.csv")), report.histograms_csv())?;
    let mut series = Vec::new();
    if let Some(h) = &report.histograms.known {
        series.push(("known", h));
    }
    if let Some(h) = &report.histograms.unknown {
        series.push(("unknown", h));
    }
    write_file(
        &dir.join(format!("{prefix}confidence.svg")),
        histograms_svg(&series, "max softmax confidence"),
    )
}

fn analyze_path(path: &Path, bundle: &BenchmarkBundle) -> Result<AnalysisReport> {
    analyze(&load_checkpoint_checked(path)?.state, bundle)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<PathBuf> {
    let started_at = unix_now();
    let bundle = load_benchmark(&args.bench)?;
    let (dir, config) = match (&args.compare, &args.checkpoint) {
        (Some(pair), _) => {
            let a = analyze_path(&pair[0], &bundle)?;
            let b = analyze_path(&pair[1], &bundle)?;
            let rows = compare_reports(&a, &b);
            let dir = fresh_dir(&args.out)?;
            write_analysis(&dir, "a_", &a)?;
            write_analysis(&dir, "b_", &b)?;
            write_file(&dir.join("comparison.csv"), comparison_csv(&rows, "a", "b"))?;
            println!("{:<32} {:>14} {:>14}", "metric", "A", "B");
            for r in &rows {
                let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
                println!("{:<32} {:>14} {:>14}", r.metric, show(r.a), show(r.b));
            }
            (dir, json!({ "a": pair[0], "b": pair[1], "benchmark": args.bench }))
        }
        (None, Some(path)) => {
            let report = analyze_path(path, &bundle)?;
            let dir = fresh_dir(&args.out)?;
            write_analysis(&dir, "", &report)?;
            println!("domain gap (target vs sources) {:?}", report.domain_gap.target_vs_sources);
            println!("head distance from h_lp {:?}", report.head_distance);
            (dir, json!({ "checkpoint": path, "benchmark": args.bench }))
        }
        (None, None) => return Err(Error::InvalidConfig("analyze needs --checkpoint or --compare".into())),
    };
    Stamp {
        command: "analyze",
        config_path: None,
        config,
        seed: None,
        started_at,
    }
    .write(&dir)?;
    Ok(dir)
}

fn split_table(table: &SuiteTable, labels: &[String]) -> SuiteTable {
    SuiteTable {
        seeds: table.seeds.clone(),
        rows: labels.iter().filter_map(|l| table.row(l).cloned()).collect(),
    }
}

pub fn cmd_suite(args: &SuiteArgs) -> Result<PathBuf> {
    let started_at = unix_now();
    let base = train_config(&args.config, None, None)?;
    if let Some(l) = args.lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("λ_hr must be ≥ 0, got {l}")));
    }
    let bundle = load_benchmark(&args.bench)?;
    let dir = fresh_dir(&args.out)?;

    let mut jobs: Vec<SuiteJob> = Variant::ALL
        .iter()
        .map(|&v| SuiteJob {
            label: v.name().to_string(),
            config: TrainConfig {
                variant: v,
                ..base.clone()
            },
        })
        .collect();
    let sweep_labels: Vec<String> = args.lambdas.iter().map(|l| format!("lambda={l}")).collect();
    for (&l, label) in args.lambdas.iter().zip(&sweep_labels) {
        if l != base.lambda_hr {
            jobs.push(SuiteJob {
                label: label.clone(),
                config: TrainConfig {
                    variant: Variant::Rpf,
                    lambda_hr: l,
                    ..base.clone()
                },
            });
        }
    }

    let runs_dir = dir.join("runs");
    if !args.no_run_dirs {
        fs::create_dir(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    }
    let mut write_errors = Vec::new();
    let table = run_jobs(&bundle, &base, &jobs, &args.seeds, |label, seed, res| {
        match res {
            Ok(exp) => info!("{label} seed {seed}: H-score {:.4}", exp.eval.best_h_score),
            Err(e) => warn!("{label} seed {seed} FAILED: {e}"),
        }
        if args.no_run_dirs {
            return;
        }
        if let Ok(exp) = res {
            let run_dir = runs_dir.join(format!("{}-s{seed}", label.replace('=', "")));
            let written = fs::create_dir(&run_dir)
                .map_err(|e| Error::io(&run_dir, e))
                .and_then(|()| write_run_dir(&run_dir, exp, &bundle))
                .and_then(|()| {
                    Stamp {
                        command: "suite",
                        config_path: args.config.config.as_deref(),
                        config: json!({ "label": label, "train": exp.config.to_kv().as_map() }),
                        seed: Some(seed),
                        started_at,
                    }
                    .write(&run_dir)
                });
            if let Err(e) = written {
                write_errors.push(e);
            }
        }
    })?;
    if let Some(e) = write_errors.into_iter().next() {
        return Err(e);
    }

    let ablation_labels: Vec<String> = Variant::ALL.iter().map(|v| v.name().to_string()).collect();
    let ablation = split_table(&table, &ablation_labels);
    let mut sweep = SuiteTable {
        seeds: table.seeds.clone(),
        rows: Vec::new(),
    };
    for (&l, label) in args.lambdas.iter().zip(&sweep_labels) {
        let source = if l == base.lambda_hr { Variant::Rpf.name() } else { label.as_str() };
        if let Some(row) = table.row(source) {
            sweep.rows.push(SuiteRow {
                label: label.clone(),
                ..row.clone()
            });
        }
    }
    write_file(&dir.join("ablation.csv"), ablation.to_csv())?;
    write_file(&dir.join("lambda_sweep.csv"), sweep.to_csv())?;
    write_file(&dir.join("thresholds.csv"), ablation.thresholds_csv())?;
    let (rho_imp1, rho_imp2) = ablation.head_distance_correlations();
    write_file(
        &dir.join("correlations.json"),
        serde_json::to_string_pretty(&json!({
            "spearman_head_distance_vs_imp1": rho_imp1,
            "spearman_head_distance_vs_imp2": rho_imp2,
        }))?,
    )?;
    Stamp {
        command: "suite",
        config_path: args.config.config.as_deref(),
        config: json!({
            "train": base.to_kv().as_map(),
            "benchmark": args.bench,
            "seeds": args.seeds,
            "lambdas": args.lambdas,
        }),
        seed: None,
        started_at,
    }
    .write(&dir)?;

    let show = |v: (Option<f64>, Option<f64>)| match v {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "n/a".into(),
    };
    println!("{:<20} {:>18} {:>18}", "variant", "Acc", "H-score");
    for row in ablation.rows.iter().chain(&sweep.rows) {
        let mark = if row.failed() { " FAILED" } else { "" };
        println!("{:<20} {:>18} {:>18}{mark}", row.label, show(row.acc()), show(row.h_score()));
    }
    println!("suite written to {}", dir.display());
    Ok(dir)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Suite(a) => cmd_suite(a),
    };
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
