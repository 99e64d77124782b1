mod common;

use std::sync::OnceLock;

use rpf::data::{generate_benchmark, BenchmarkBundle, BenchmarkConfig, Role};
use rpf::losses::Variant;
use rpf::nn::ParamBuffers;
use rpf::train::{
    fine_tune, linear_probe, prepare, pretrain_f0, run_ablation_suite, run_experiment, run_lambda_sweep,
    write_run_dir, Prepared, TrainConfig, DEFAULT_LAMBDAS,
};
use rpf::Error;

fn bench() -> &'static BenchmarkBundle {
    static B: OnceLock<BenchmarkBundle> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = BenchmarkConfig {
            source_samples_per_class: 60,
            target_samples_per_class: 30,
            pretext_samples_per_class: 40,
            ..BenchmarkConfig::default()
        };
        generate_benchmark(&cfg, 21).unwrap()
    })
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 6,
        decay_epoch: 4,
        lp_epochs: 4,
        pretrain_epochs: 6,
        hidden_dims: vec![24],
        feature_dim: 12,
        lr: 0.05,
        ..TrainConfig::default()
    }
}

fn prepared() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| prepare(bench(), &small_cfg()).unwrap())
}

#[test]
fn pretraining_beats_chance_and_is_deterministic() {
    let cfg = small_cfg();
    let (f0, report) = pretrain_f0(&bench().pretext, &cfg).unwrap();
    assert!(report.val_acc > 1.0 / report.num_classes as f64, "pretext val acc {}", report.val_acc);
    let (again, _) = pretrain_f0(&bench().pretext, &cfg).unwrap();
    assert_eq!(f0.checksum(), again.checksum());
    let mut f0 = f0;
    assert!(matches!(f0.try_mut().unwrap_err(), Error::FrozenMutation(_)));
}

#[test]
fn linear_probe_trains_only_the_head() {
    let p = prepared();
    let sources = &bench().sources;
    let cfg = small_cfg();
    let h = rpf::nn::HeadParams::init(cfg.feature_dim, bench().num_known(), &rpf::rng::SeedTree::new(1), "h");
    let mut state = rpf::nn::ModelState::from_pretrained(rpf::nn::Frozen::new(p.state.f0().clone()), h.clone()).unwrap();
    let f_before = state.f.checksum();
    linear_probe(&mut state, sources, &cfg).unwrap();
    assert_eq!(state.f.checksum(), f_before);
    assert_ne!(state.h, h);
    assert_eq!(state.h_lp().unwrap(), &state.h);
    assert!(matches!(
        linear_probe(&mut state, sources, &cfg).unwrap_err(),
        Error::FrozenMutation(_)
    ));

    assert!(p.probe.losses[1] < p.probe.losses[0], "probe losses {:?}", p.probe.losses);
    assert!(p.probe.val_acc > 1.0 / bench().num_known() as f64);
    assert_eq!(p.state.h_lp().unwrap(), &p.state.h);
}

#[test]
fn fine_tune_runs_every_epoch_with_step_decay() {
    let p = prepared();
    let cfg = small_cfg();
    let r = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &cfg).unwrap();
    assert_eq!(r.epochs.len(), cfg.epochs);
    for e in &r.epochs {
        let want = if e.epoch <= cfg.decay_epoch { cfg.lr } else { cfg.lr * cfg.decay_factor };
        assert!((e.lr - want).abs() < 1e-15, "epoch {} lr {}", e.epoch, e.lr);
        assert_eq!(e.domain_lpft.len(), bench().sources.len());
    }
    let best = r.epochs.iter().map(|e| e.val_acc).fold(f64::MIN, f64::max);
    let first = r.epochs.iter().find(|e| e.val_acc == best).unwrap().epoch;
    assert_eq!(r.selected_epoch, first);
    assert_eq!(r.selected_val_acc, best);
    assert!(r.epochs.iter().all(|e| e.l_fr > 0.0 && e.l_hr < 0.0));
}

#[test]
fn fine_tune_leaves_frozen_parts_untouched() {
    let p = prepared();
    let f0 = p.state.f0().checksum();
    let h_lp = p.state.h_lp().unwrap().checksum();
    let bank = p.bank.checksum();
    let r = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &small_cfg()).unwrap();
    assert_eq!(r.state.f0().checksum(), f0);
    assert_eq!(r.state.h_lp().unwrap().checksum(), h_lp);
    assert_eq!(p.bank.checksum(), bank);
    assert_ne!(r.state.f.checksum(), f0);
}

#[test]
fn disabled_regularizers_reproduce_plain_lpft() {
    let p = prepared();
    let lpft = TrainConfig {
        variant: Variant::Lpft,
        ..small_cfg()
    };
    let rpf = TrainConfig {
        variant: Variant::Rpf,
        lambda_hr: 0.0,
        fr_weight: 0.0,
        ..small_cfg()
    };
    let a = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &lpft).unwrap();
    let b = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &rpf).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(a.selected_epoch, b.selected_epoch);
}

#[test]
fn fine_tune_without_required_inputs_fails() {
    let p = prepared();
    let err = fine_tune(p.state.clone(), &bench().sources, None, &small_cfg()).unwrap_err();
    assert!(matches!(err, Error::MissingPrototypeBank));

    let unprobed =
        rpf::nn::ModelState::from_parts(p.state.f.clone(), p.state.h.clone(), rpf::nn::Frozen::new(p.state.f0().clone()), None)
            .unwrap();
    let err = fine_tune(unprobed.clone(), &bench().sources, Some(&p.bank), &small_cfg()).unwrap_err();
    assert!(matches!(err, Error::MissingHeadSnapshot));
    let no_head = TrainConfig {
        variant: Variant::NoPretrainedHead,
        ..small_cfg()
    };
    assert!(fine_tune(unprobed, &bench().sources, Some(&p.bank), &no_head).is_ok());
}

#[test]
fn target_data_cannot_be_trained_on() {
    let p = prepared();
    let mut sources = bench().sources.clone();
    sources[1].train.role = Role::Target;
    let err = fine_tune(p.state.clone(), &sources, Some(&p.bank), &small_cfg()).unwrap_err();
    assert!(matches!(err, Error::TargetLeak(_)));
}

#[test]
fn poisoned_target_does_not_change_training() {
    let mut poisoned = bench().clone();
    poisoned.target.x.map_inplace(|_| f64::NAN);
    let cfg = small_cfg();
    let a = prepare(&poisoned, &cfg).unwrap();
    let ra = fine_tune(a.state.clone(), &poisoned.sources, Some(&a.bank), &cfg).unwrap();
    let p = prepared();
    let rb = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &cfg).unwrap();
    assert_eq!(ra.state, rb.state);
    assert_eq!(ra.epochs, rb.epochs);
}

#[test]
fn divergence_aborts_with_a_numerical_error() {
    let p = prepared();
    let cfg = TrainConfig {
        lr: 1e6,
        ..small_cfg()
    };
    let err = fine_tune(p.state.clone(), &bench().sources, Some(&p.bank), &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn invalid_schedule_is_rejected() {
    let cfg = TrainConfig {
        decay_epoch: 10,
        ..small_cfg()
    };
    assert!(matches!(cfg.validate().unwrap_err(), Error::InvalidConfig(_)));
    assert!(TrainConfig { epochs: 0, ..small_cfg() }.validate().is_err());
}

#[test]
fn experiment_is_reproducible_and_writes_its_run_dir() {
    let cfg = small_cfg();
    let a = run_experiment(bench(), &cfg).unwrap();
    let b = run_experiment(bench(), &cfg).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.eval, b.eval);
    assert_eq!(a.analysis, b.analysis);
    assert!(a.record.epochs.iter().all(|e| e.l_fr != 0.0 && e.l_hr != 0.0));

    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &a, bench()).unwrap();
    for f in ["config.json", "metrics.csv", "checkpoint.rpfckpt", "eval.json", "analysis.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,l_lpft,l_fr,l_hr,train_acc,val_acc"));
    assert_eq!(metrics.lines().count(), 1 + cfg.epochs);
}

#[test]
fn ablation_suite_and_lambda_sweep_tables() {
    let cfg = TrainConfig {
        epochs: 3,
        decay_epoch: 2,
        ..small_cfg()
    };
    let seeds = [0, 1];
    let table = run_ablation_suite(bench(), &cfg, &seeds).unwrap();
    assert_eq!(table.rows.len(), 7);
    for row in &table.rows {
        assert!(!row.failed());
        assert_eq!(row.runs.len(), 2);
        assert!(row.acc().1.is_some() && row.h_score().1.is_some());
    }
    assert_eq!(table.to_csv().lines().count(), 8);

    let standalone = run_experiment(bench(), &TrainConfig { variant: Variant::Lpft, ..cfg.clone() }).unwrap();
    let lpft = table.row("lpft").unwrap();
    assert_eq!(lpft.runs[0].acc, standalone.eval.acc_known);
    assert_eq!(lpft.runs[0].best_h_score, standalone.eval.best_h_score);

    let sweep = run_lambda_sweep(bench(), &cfg, &DEFAULT_LAMBDAS, &seeds[..1]).unwrap();
    assert_eq!(sweep.rows.len(), 3);
    let zero = run_lambda_sweep(bench(), &cfg, &[0.0], &seeds).unwrap();
    assert_eq!(zero.rows[0].runs, table.row("no_hr").unwrap().runs);
    assert!(run_lambda_sweep(bench(), &cfg, &[-1.0], &seeds).is_err());
}

#[test]
fn regularized_run_keeps_a_higher_training_loss() {
    let bundle = generate_benchmark(&BenchmarkConfig::default(), 7).unwrap();
    let base = common::desk_config();
    let p = prepare(&bundle, &base).unwrap();
    let lpft = fine_tune(
        p.state.clone(),
        &bundle.sources,
        Some(&p.bank),
        &TrainConfig {
            variant: Variant::Lpft,
            ..base.clone()
        },
    )
    .unwrap();
    let rpf = fine_tune(p.state.clone(), &bundle.sources, Some(&p.bank), &base).unwrap();
    assert!(
        rpf.selected_train_lpft >= lpft.selected_train_lpft,
        "rpf {} lpft {}",
        rpf.selected_train_lpft,
        lpft.selected_train_lpft
    );
    assert!(lpft.selected_train_acc >= 0.99, "lpft train acc {}", lpft.selected_train_acc);
    assert!(rpf.selected_train_acc >= 0.99, "rpf train acc {}", rpf.selected_train_acc);
}
