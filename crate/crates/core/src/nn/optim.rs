//! Plain SGD with step decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradSet, ModelState, ParamBuffers};

/// Learning rate schedule: `lr · factor^(epoch / decay_epoch)`.
///
/// `decay_epoch == 0` disables decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, decay_epoch: usize, decay_factor: f64) -> Result<Self> {
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate {learning_rate}")));
        }
        if !(decay_factor > 0.0) || !decay_factor.is_finite() {
            return Err(Error::InvalidConfig(format!("decay factor {decay_factor}")));
        }
        Ok(Self {
            learning_rate,
            decay_epoch,
            decay_factor,
            epoch: 0,
        })
    }

    pub fn milestones_passed(&self) -> usize {
        if self.decay_epoch == 0 {
            0
        } else {
            self.epoch / self.decay_epoch
        }
    }

    pub fn effective_lr(&self) -> f64 {
        let mut lr = self.learning_rate;
        for _ in 0..self.milestones_passed() {
            lr *= self.decay_factor;
        }
        lr
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// `p ← p − lr · g` over matching buffers.
pub fn sgd_update<P: ParamBuffers>(params: &mut P, grads: &P, lr: f64) -> Result<()> {
    let gb = grads.buffers();
    let mut pb = params.buffers_mut();
    if pb.len() != gb.len() || pb.iter().zip(&gb).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::shape("gradient buffers do not match parameters"));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (p, g) in pb.iter_mut().zip(gb) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// One SGD step on the trainable parameters `f` and `h`. The frozen snapshots
/// are not reachable from here.
pub fn sgd_step(state: &mut ModelState, grads: &GradSet, opt: &OptimizerState) -> Result<()> {
    if !grads.matches(state) {
        return Err(Error::shape("gradient set does not match model state"));
    }
    let lr = opt.effective_lr();
    sgd_update(&mut state.f, &grads.f, lr)?;
    sgd_update(&mut state.h, &grads.h, lr)
}
