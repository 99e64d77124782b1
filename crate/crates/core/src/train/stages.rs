use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PretextData, SourceDomain};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::losses::{compute_gradients, objective_value, Batch, LossBreakdown, Objective, PrototypeBank, Variant};
use crate::nn::{cross_entropy, sgd_step, Frozen, HeadParams, MlpParams, ModelState, OptimizerState};
use crate::rng::{SeedTree, Stream};
use crate::train::TrainConfig;

/// Any loss above this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Full-pass `L_lp` on the source training data before the first epoch and
    /// after every epoch.
    pub losses: Vec<f64>,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Means of the mini-batch losses over the epoch.
    pub l_lpft: f64,
    pub l_fr: f64,
    pub l_hr: f64,
    pub l_total: f64,
    /// Full-pass accuracies after the epoch.
    pub train_acc: f64,
    pub val_acc: f64,
    /// Full-pass `L_lp-ft` on each source domain's training split after the
    /// epoch, in source order.
    pub domain_lpft: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub l_lpft: f64,
    pub l_fr: f64,
    pub l_hr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub selected_val_acc: f64,
    /// Full-pass training `L_lp-ft` and accuracy of the selected model.
    pub selected_train_lpft: f64,
    pub selected_train_acc: f64,
    /// The selected model.
    pub state: ModelState,
}

impl RunRecord {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("epoch,l_lpft,l_fr,l_hr,train_acc,val_acc\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.l_lpft, e.l_fr, e.l_hr, e.train_acc, e.val_acc
            ));
        }
        s
    }
}

fn batches(n: usize, batch_size: usize, rng: &mut Stream) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn guard(losses: &LossBreakdown, epoch: usize) -> Result<()> {
    for (name, v) in [
        ("total", losses.total),
        ("lp", losses.lp),
        ("lpft", losses.lpft),
        ("fr", losses.fr),
        ("hr", losses.hr),
    ] {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                epoch,
                detail: format!("L_{name} = {v}"),
            });
        }
    }
    Ok(())
}

fn check_parameters(state: &ModelState, epoch: usize) -> Result<()> {
    use crate::nn::ParamBuffers;
    let finite = |bufs: Vec<&[f64]>| bufs.iter().all(|b| b.iter().all(|v| v.is_finite()));
    if finite(state.f.buffers()) && finite(state.h.buffers()) {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            detail: "non-finite parameters".into(),
        })
    }
}

struct EpochSums {
    sums: LossBreakdown,
    steps: usize,
}

/// One pass of mini-batch SGD over `data`.
#[allow(clippy::too_many_arguments)]
fn sgd_epoch(
    state: &mut ModelState,
    data: &Dataset,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
    opt: &OptimizerState,
    batch_size: usize,
    rng: &mut Stream,
    epoch: usize,
    mut trace: Option<&mut Vec<StepLog>>,
) -> Result<EpochSums> {
    let mut sums = LossBreakdown::default();
    let order = batches(data.len(), batch_size, rng);
    let steps = order.len();
    for (step, idx) in order.into_iter().enumerate() {
        let batch = Batch::new(data.x.select_rows(&idx), idx.iter().map(|&i| data.y[i]).collect())?;
        let (losses, grads) = compute_gradients(state, &batch, bank, objective)?;
        guard(&losses, epoch)?;
        sgd_step(state, &grads, opt)?;
        sums.total += losses.total;
        sums.lp += losses.lp;
        sums.lpft += losses.lpft;
        sums.fr += losses.fr;
        sums.hr += losses.hr;
        if let Some(t) = trace.as_deref_mut() {
            t.push(StepLog {
                epoch,
                step,
                l_lpft: losses.lpft,
                l_fr: losses.fr,
                l_hr: losses.hr,
            });
        }
    }
    check_parameters(state, epoch)?;
    Ok(EpochSums { sums, steps })
}

fn pooled(parts: &[&Dataset], context: &'static str) -> Result<Dataset> {
    for p in parts {
        p.ensure_trainable(context)?;
    }
    Dataset::concat(parts)
}

/// Trains a fresh feature extractor with a temporary head on the pretext
/// task and returns it frozen.
pub fn pretrain_f0(pretext: &PretextData, cfg: &TrainConfig) -> Result<(Frozen<MlpParams>, PretrainReport)> {
    cfg.validate()?;
    let classes = pretext.train.classes();
    if classes.len() < 2 {
        return Err(Error::InvalidConfig("pretext data needs at least 2 classes".into()));
    }
    let train = pooled(&[&pretext.train], "pretrain_f0")?;
    pretext.val.ensure_trainable("pretrain_f0")?;
    let seeds = SeedTree::new(cfg.seed);
    let f = MlpParams::init(&cfg.layer_dims(train.input_dim()), cfg.activation, &seeds, "init/f0")?;
    let h = HeadParams::init(cfg.feature_dim, pretext.num_classes, &seeds, "init/pretext-head");
    let mut state = ModelState::from_pretrained(Frozen::new(f), h)?;
    let objective = Objective {
        lpft: 1.0,
        ..Objective::NONE
    };
    let mut opt = OptimizerState::new(cfg.pretrain_lr, 0, 1.0)?;
    let mut rng = seeds.stream("shuffle/pretrain");
    let mut final_loss = f64::NAN;
    for epoch in 1..=cfg.pretrain_epochs {
        let e = sgd_epoch(&mut state, &train, None, &objective, &opt, cfg.batch_size, &mut rng, epoch, None)?;
        final_loss = e.sums.lpft / e.steps as f64;
        debug!("pretrain epoch {epoch}: loss {final_loss:.6}");
        opt.end_epoch();
    }
    let train_acc = accuracy(&state.f, &state.h, &train)?;
    let val_acc = accuracy(&state.f, &state.h, &pretext.val)?;
    info!("pretrained f0: train acc {train_acc:.4}, val acc {val_acc:.4}");
    Ok((
        Frozen::new(state.f),
        PretrainReport {
            epochs: cfg.pretrain_epochs,
            final_loss,
            train_acc,
            val_acc,
            num_classes: pretext.num_classes,
        },
    ))
}

fn full_loss(state: &ModelState, data: &Dataset, objective: &Objective) -> Result<LossBreakdown> {
    objective_value(state, &Batch::new(data.x.clone(), data.y.clone())?, None, objective)
}

/// Trains only the head on frozen `f0` features, then stores the result both
/// as the live head and as the write-once `h_lp` snapshot.
pub fn linear_probe(state: &mut ModelState, sources: &[SourceDomain], cfg: &TrainConfig) -> Result<ProbeReport> {
    cfg.validate()?;
    let train = pooled(&sources.iter().map(|s| &s.train).collect::<Vec<_>>(), "linear_probe")?;
    let val = pooled(&sources.iter().map(|s| &s.val).collect::<Vec<_>>(), "linear_probe")?;
    let objective = Objective::linear_probe();
    let opt = OptimizerState::new(cfg.lp_lr, 0, 1.0)?;
    let mut rng = SeedTree::new(cfg.seed).stream("shuffle/probe");
    let mut losses = vec![full_loss(state, &train, &objective)?.lp];
    for epoch in 1..=cfg.lp_epochs {
        sgd_epoch(state, &train, None, &objective, &opt, cfg.batch_size, &mut rng, epoch, None)?;
        losses.push(full_loss(state, &train, &objective)?.lp);
    }
    state.set_head_snapshot(state.h.clone())?;
    let train_acc = accuracy(state.f0(), &state.h, &train)?;
    let val_acc = accuracy(state.f0(), &state.h, &val)?;
    info!("linear probe: train acc {train_acc:.4}, val acc {val_acc:.4}");
    Ok(ProbeReport {
        losses,
        train_acc,
        val_acc,
    })
}

/// Builds the initial fine-tuning state from a frozen `f0`: a fresh head,
/// linear probing, and the head snapshot.
pub fn probe_from(f0: Frozen<MlpParams>, sources: &[SourceDomain], cfg: &TrainConfig) -> Result<(ModelState, ProbeReport)> {
    let c = sources
        .iter()
        .flat_map(|s| s.train.y.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let h = HeadParams::init(f0.feature_dim(), c, &SeedTree::new(cfg.seed), "init/head");
    let mut state = ModelState::from_pretrained(f0, h)?;
    let report = linear_probe(&mut state, sources, cfg)?;
    Ok((state, report))
}

/// Mini-batch SGD on the configured variant's objective with best-validation
/// model selection.
pub fn fine_tune(
    mut state: ModelState,
    sources: &[SourceDomain],
    bank: Option<&PrototypeBank>,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    let spec = cfg.loss_spec();
    let objective = spec.objective();
    if objective.needs_bank() && bank.is_none() {
        return Err(Error::MissingPrototypeBank);
    }
    let seeds = SeedTree::new(cfg.seed);
    if spec.variant.uses_pretrained_head() {
        let lp = state.h_lp().ok_or(Error::MissingHeadSnapshot)?.clone();
        state.h = lp;
    } else {
        state.h = HeadParams::init(state.f.feature_dim(), state.num_classes(), &seeds, "init/head-reinit");
    }
    let train = pooled(&sources.iter().map(|s| &s.train).collect::<Vec<_>>(), "fine_tune")?;
    let val = pooled(&sources.iter().map(|s| &s.val).collect::<Vec<_>>(), "fine_tune")?;
    let lpft = Objective {
        lpft: 1.0,
        ..Objective::NONE
    };

    let mut opt = OptimizerState::new(cfg.lr, cfg.decay_epoch, cfg.decay_factor)?;
    let mut rng = seeds.stream("shuffle/finetune");
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = Vec::new();
    let mut best: Option<(usize, f64, ModelState)> = None;
    for epoch in 1..=cfg.epochs {
        let lr = opt.effective_lr();
        let trace = cfg.trace_steps.then_some(&mut steps);
        let e = sgd_epoch(&mut state, &train, bank, &objective, &opt, cfg.batch_size, &mut rng, epoch, trace)
            .map_err(|err| match (err, epochs.last()) {
                (Error::Diverged { epoch, detail }, Some(last)) => Error::Diverged {
                    epoch,
                    detail: format!("{detail}; {}", last_finite(last)),
                },
                (err, _) => err,
            })?;
        opt.end_epoch();
        let n = e.steps as f64;
        let train_acc = accuracy(&state.f, &state.h, &train)?;
        let val_acc = accuracy(&state.f, &state.h, &val)?;
        let domain_lpft = sources
            .iter()
            .map(|s| full_loss(&state, &s.train, &lpft).map(|l| l.lpft))
            .collect::<Result<Vec<_>>>()?;
        let log = EpochLog {
            epoch,
            lr,
            l_lpft: e.sums.lpft / n,
            l_fr: e.sums.fr / n,
            l_hr: e.sums.hr / n,
            l_total: e.sums.total / n,
            train_acc,
            val_acc,
            domain_lpft,
        };
        debug!(
            "epoch {epoch}: lpft {:.6} fr {:.6} hr {:.6} train {:.4} val {:.4}",
            log.l_lpft, log.l_fr, log.l_hr, train_acc, val_acc
        );
        epochs.push(log);
        if best.as_ref().map_or(true, |(_, acc, _)| val_acc > *acc) {
            best = Some((epoch, val_acc, state.clone()));
        }
    }
    let (selected_epoch, selected_val_acc, selected) = best.expect("at least one epoch");
    let selected_train_lpft = full_loss(&selected, &train, &lpft)?.lpft;
    let selected_train_acc = accuracy(&selected.f, &selected.h, &train)?;
    info!(
        "{}: selected epoch {selected_epoch} (val acc {selected_val_acc:.4})",
        spec.variant
    );
    Ok(RunRecord {
        variant: spec.variant,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        epochs,
        steps,
        selected_epoch,
        selected_val_acc,
        selected_train_lpft,
        selected_train_acc,
        state: selected,
    })
}

fn last_finite(log: &EpochLog) -> String {
    format!(
        "last finite epoch {}: l_lpft {} l_fr {} l_hr {} l_total {} train_acc {} val_acc {}",
        log.epoch, log.l_lpft, log.l_fr, log.l_hr, log.l_total, log.train_acc, log.val_acc
    )
}

/// Mean full-pass cross-entropy of `h ∘ f` on `data`.
pub fn dataset_cross_entropy(f: &MlpParams, h: &HeadParams, data: &Dataset) -> Result<f64> {
    cross_entropy(&h.forward(&f.forward(&data.x)?)?, &data.y)
}
