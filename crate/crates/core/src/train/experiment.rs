use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze, curves_from_record, loss_curves_csv, loss_curves_svg, spearman_rho, AnalysisReport,
};
use crate::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION};
use crate::data::BenchmarkBundle;
use crate::error::{Error, Result};
use crate::eval::{sweep_thresholds, threshold_sweep, EvalReport};
use crate::losses::{compute_prototypes, PrototypeBank, Variant};
use crate::nn::ModelState;
use crate::train::stages::{fine_tune, pretrain_f0, probe_from, PretrainReport, ProbeReport, RunRecord};
use crate::train::TrainConfig;

/// Everything that precedes fine-tuning and does not depend on the variant:
/// the frozen `f0`, the probed state with its `h_lp` snapshot, and the bank.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub pretrain: PretrainReport,
    pub probe: ProbeReport,
    pub state: ModelState,
    pub bank: PrototypeBank,
}

pub fn prepare(bundle: &BenchmarkBundle, cfg: &TrainConfig) -> Result<Prepared> {
    let (f0, pretrain) = pretrain_f0(&bundle.pretext, cfg)?;
    let (state, probe) = probe_from(f0, &bundle.sources, cfg)?;
    let bank = compute_prototypes(state.f0(), &bundle.sources, bundle.num_known())?;
    Ok(Prepared {
        seed: cfg.seed,
        pretrain,
        probe,
        state,
        bank,
    })
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: TrainConfig,
    pub pretrain: PretrainReport,
    pub probe: ProbeReport,
    pub bank: PrototypeBank,
    pub record: RunRecord,
    pub eval: EvalReport,
    pub analysis: AnalysisReport,
}

/// Fine-tunes from an already prepared state, then evaluates and analyzes.
pub fn run_experiment_with(bundle: &BenchmarkBundle, prepared: &Prepared, cfg: &TrainConfig) -> Result<Experiment> {
    if prepared.seed != cfg.seed {
        return Err(Error::InvalidConfig(format!(
            "prepared state has seed {} but the run asks for {}",
            prepared.seed, cfg.seed
        )));
    }
    let record = fine_tune(prepared.state.clone(), &bundle.sources, Some(&prepared.bank), cfg)?;
    let eval = threshold_sweep(&record.state, &bundle.target)?;
    let analysis = analyze(&record.state, bundle)?;
    Ok(Experiment {
        config: cfg.clone(),
        pretrain: prepared.pretrain.clone(),
        probe: prepared.probe.clone(),
        bank: prepared.bank.clone(),
        record,
        eval,
        analysis,
    })
}

/// Pretrain, probe, build prototypes, fine-tune, evaluate and analyze.
pub fn run_experiment(bundle: &BenchmarkBundle, cfg: &TrainConfig) -> Result<Experiment> {
    let prepared = prepare(bundle, cfg)?;
    run_experiment_with(bundle, &prepared, cfg)
}

#[derive(Serialize)]
struct StagesJson<'a> {
    pretrain: &'a PretrainReport,
    probe: &'a ProbeReport,
    selected_epoch: usize,
    selected_val_acc: f64,
    selected_train_lpft: f64,
    selected_train_acc: f64,
}

#[derive(Serialize)]
struct ConfigJson<'a> {
    train: &'a BTreeMap<String, String>,
    config_hash: &'a str,
    benchmark_seed: u64,
    benchmark: &'a BTreeMap<String, String>,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes every artifact of a run into `dir` (which must exist).
pub fn write_run_dir(dir: &Path, exp: &Experiment, bundle: &BenchmarkBundle) -> Result<()> {
    let train_kv = exp.config.to_kv();
    let bench_kv = bundle.config.to_kv();
    let hash = train_kv.hash();
    write(
        dir,
        "config.json",
        serde_json::to_string_pretty(&ConfigJson {
            train: train_kv.as_map(),
            config_hash: &hash,
            benchmark_seed: bundle.seed,
            benchmark: bench_kv.as_map(),
        })?,
    )?;
    write(dir, "metrics.csv", exp.record.metrics_csv())?;
    save_checkpoint(
        &dir.join("checkpoint.rpfckpt"),
        &Checkpoint {
            state: exp.record.state.clone(),
            bank: Some(exp.bank.clone()),
        },
        &CheckpointMeta {
            format_version: FORMAT_VERSION,
            config_hash: hash.clone(),
            seed: exp.config.seed,
            variant: exp.record.variant.name().to_string(),
            selected_epoch: exp.record.selected_epoch,
        },
    )?;
    write(dir, "eval.json", serde_json::to_string_pretty(&exp.eval)?)?;
    write(dir, "eval_sweep.csv", exp.eval.sweep_csv())?;
    write(dir, "analysis.json", serde_json::to_string_pretty(&exp.analysis)?)?;
    write(dir, "histograms.csv", exp.analysis.histograms_csv())?;
    let ids: Vec<usize> = bundle.sources.iter().map(|s| s.domain_id).collect();
    let curves = curves_from_record(&exp.record, &ids);
    write(dir, "loss_curves.csv", loss_curves_csv(&curves))?;
    write(dir, "loss_curves.svg", loss_curves_svg(&curves))?;
    write(dir, "prototypes.csv", exp.bank.to_csv())?;
    write(
        dir,
        "stages.json",
        serde_json::to_string_pretty(&StagesJson {
            pretrain: &exp.pretrain,
            probe: &exp.probe,
            selected_epoch: exp.record.selected_epoch,
            selected_val_acc: exp.record.selected_val_acc,
            selected_train_lpft: exp.record.selected_train_lpft,
            selected_train_acc: exp.record.selected_train_acc,
        })?,
    )?;
    if exp.config.trace_steps {
        let mut s = String::from("epoch,step,l_lpft,l_fr,l_hr\n");
        for t in &exp.record.steps {
            s.push_str(&format!("{},{},{},{},{}\n", t.epoch, t.step, t.l_lpft, t.l_fr, t.l_hr));
        }
        write(dir, "steps.csv", s)?;
    }
    Ok(())
}

/// Outcome of one run inside a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub acc: f64,
    pub best_h_score: f64,
    pub head_distance: Option<f64>,
    pub imp1: Option<f64>,
    pub imp2: Option<f64>,
    /// H-score at each sweep threshold.
    pub sweep_h: Vec<f64>,
    pub sweep_known: Vec<Option<f64>>,
    pub sweep_open: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: String,
    pub variant: Variant,
    pub lambda_hr: f64,
    pub runs: Vec<SeedResult>,
    /// Error messages of runs that failed, by seed.
    pub failures: Vec<(u64, String)>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let std = (v.len() >= 2).then(|| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(m), std)
}

impl SuiteRow {
    pub fn acc(&self) -> (Option<f64>, Option<f64>) {
        mean_std(&self.runs.iter().map(|r| r.acc).collect::<Vec<_>>())
    }

    pub fn h_score(&self) -> (Option<f64>, Option<f64>) {
        mean_std(&self.runs.iter().map(|r| r.best_h_score).collect::<Vec<_>>())
    }

    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<SuiteRow>,
}

impl SuiteTable {
    pub fn row(&self, label: &str) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// `label,variant,lambda_hr,runs,acc_mean,acc_std,h_mean,h_std,status`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut s = String::from("label,variant,lambda_hr,runs,acc_mean,acc_std,h_mean,h_std,status\n");
        for r in &self.rows {
            let (am, asd) = r.acc();
            let (hm, hsd) = r.h_score();
            let status = if r.failed() {
                format!(
                    "FAILED({})",
                    r.failures.iter().map(|(seed, _)| seed.to_string()).collect::<Vec<_>>().join(";")
                )
            } else {
                "ok".to_string()
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.label,
                r.variant.name(),
                r.lambda_hr,
                r.runs.len(),
                opt(am),
                opt(asd),
                opt(hm),
                opt(hsd),
                status
            ));
        }
        s
    }

    /// Eight rows per label: thresholds with seed-averaged known/open accuracy
    /// and H-score.
    pub fn thresholds_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut s = String::from("label,threshold,acc_known,acc_open,h_score\n");
        for r in &self.rows {
            for (k, tau) in sweep_thresholds().into_iter().enumerate() {
                let known: Vec<f64> = r.runs.iter().filter_map(|x| x.sweep_known[k]).collect();
                let open: Vec<f64> = r.runs.iter().filter_map(|x| x.sweep_open[k]).collect();
                let h: Vec<f64> = r.runs.iter().map(|x| x.sweep_h[k]).collect();
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.label,
                    tau,
                    opt(mean_std(&known).0),
                    opt(mean_std(&open).0),
                    opt(mean_std(&h).0)
                ));
            }
        }
        s
    }

    /// Spearman correlation between head distance and `imp1` / `imp2` across
    /// every successful run in the table.
    pub fn head_distance_correlations(&self) -> (Option<f64>, Option<f64>) {
        let runs: Vec<&SeedResult> = self.rows.iter().flat_map(|r| &r.runs).collect();
        let corr = |pick: fn(&SeedResult) -> Option<f64>| {
            let pairs: Vec<(f64, f64)> = runs.iter().filter_map(|r| Some((r.head_distance?, pick(r)?))).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            spearman_rho(&xs, &ys).ok()
        };
        (corr(|r| r.imp1), corr(|r| r.imp2))
    }
}

fn seed_result(exp: &Experiment) -> SeedResult {
    SeedResult {
        seed: exp.config.seed,
        acc: exp.eval.acc_known,
        best_h_score: exp.eval.best_h_score,
        head_distance: exp.analysis.head_distance,
        imp1: exp.analysis.improvement.map(|i| i.imp1),
        imp2: exp.analysis.improvement.map(|i| i.imp2),
        sweep_h: exp.eval.sweep.iter().map(|r| r.h_score).collect(),
        sweep_known: exp.eval.sweep.iter().map(|r| r.acc_known).collect(),
        sweep_open: exp.eval.sweep.iter().map(|r| r.acc_open).collect(),
    }
}

/// One configured job in a suite.
#[derive(Debug, Clone)]
pub struct SuiteJob {
    pub label: String,
    pub config: TrainConfig,
}

/// Runs every job for every seed. Jobs of one seed share the prepared state
/// and run on separate threads; results are assembled in job order.
pub fn run_jobs(
    bundle: &BenchmarkBundle,
    base: &TrainConfig,
    jobs: &[SuiteJob],
    seeds: &[u64],
    mut on_run: impl FnMut(&str, u64, &Result<Experiment>),
) -> Result<SuiteTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("a suite needs at least one seed".into()));
    }
    let mut rows: Vec<SuiteRow> = jobs
        .iter()
        .map(|j| SuiteRow {
            label: j.label.clone(),
            variant: j.config.variant,
            lambda_hr: j.config.lambda_hr,
            runs: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for &seed in seeds {
        let seed_cfg = TrainConfig { seed, ..base.clone() };
        let prepared = match prepare(bundle, &seed_cfg) {
            Ok(p) => p,
            Err(e) => {
                warn!("seed {seed}: preparation failed: {e}");
                for r in rows.iter_mut() {
                    r.failures.push((seed, e.to_string()));
                }
                continue;
            }
        };
        let results: Vec<Result<Experiment>> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|j| {
                    let cfg = TrainConfig { seed, ..j.config.clone() };
                    let prepared = &prepared;
                    scope.spawn(move || run_experiment_with(bundle, prepared, &cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Undefined("suite worker panicked".into()))))
                .collect()
        });
        for ((row, job), res) in rows.iter_mut().zip(jobs).zip(results) {
            on_run(&job.label, seed, &res);
            match res {
                Ok(exp) => row.runs.push(seed_result(&exp)),
                Err(e) => {
                    warn!("{} seed {seed}: {e}", job.label);
                    row.failures.push((seed, e.to_string()));
                }
            }
        }
    }
    Ok(SuiteTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

/// All seven variants under shared seeds.
pub fn run_ablation_suite(bundle: &BenchmarkBundle, base: &TrainConfig, seeds: &[u64]) -> Result<SuiteTable> {
    let jobs: Vec<SuiteJob> = Variant::ALL
        .iter()
        .map(|&v| SuiteJob {
            label: v.name().to_string(),
            config: TrainConfig {
                variant: v,
                ..base.clone()
            },
        })
        .collect();
    run_jobs(bundle, base, &jobs, seeds, |_, _, _| {})
}

pub const DEFAULT_LAMBDAS: [f64; 3] = [1.0, 0.5, 0.1];

/// One full-method run per `λ_hr` value.
pub fn run_lambda_sweep(
    bundle: &BenchmarkBundle,
    base: &TrainConfig,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<SuiteTable> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("λ_hr must be ≥ 0, got {l}")));
    }
    let jobs: Vec<SuiteJob> = lambdas
        .iter()
        .map(|&l| SuiteJob {
            label: format!("lambda={l}"),
            config: TrainConfig {
                variant: Variant::Rpf,
                lambda_hr: l,
                ..base.clone()
            },
        })
        .collect();
    run_jobs(bundle, base, &jobs, seeds, |_, _, _| {})
}
