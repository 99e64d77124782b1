//! The training pipeline: pretext pretraining of the frozen feature
//! extractor, linear probing, fine-tuning under any variant, and the
//! experiment, ablation and λ-sweep runners.

mod config;
mod experiment;
mod stages;

pub use config::{TrainConfig, TRAIN_KEYS};
pub use experiment::{
    prepare, run_ablation_suite, run_experiment, run_experiment_with, run_jobs, run_lambda_sweep, write_run_dir,
    Experiment, Prepared, SeedResult, SuiteJob, SuiteRow, SuiteTable, DEFAULT_LAMBDAS,
};
pub use stages::{
    dataset_cross_entropy, fine_tune, linear_probe, pretrain_f0, probe_from, EpochLog, PretrainReport, ProbeReport,
    RunRecord, StepLog, DIVERGENCE_LIMIT,
};
