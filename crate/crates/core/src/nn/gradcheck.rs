//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::losses::{compute_gradients, objective_value, Batch, Objective, PrototypeBank};
use crate::nn::{GradSet, ModelState, ParamBuffers};
use crate::rng::SeedTree;

/// Above this many trainable scalars only a seeded subsample is checked.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// Denominator floor for the relative error, so that entries where both
/// gradients are essentially zero compare by absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index (f buffers, then h buffers) of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn perturbed_loss(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
    index: usize,
    delta: f64,
) -> Result<f64> {
    let mut s = state.clone();
    let mut remaining = index;
    let f_len = s.f.num_scalars();
    let buffers = if index < f_len {
        s.f.buffers_mut()
    } else {
        remaining -= f_len;
        s.h.buffers_mut()
    };
    for b in buffers {
        if remaining < b.len() {
            b[remaining] += delta;
            break;
        }
        remaining -= b.len();
    }
    Ok(objective_value(&s, batch, bank, objective)?.total)
}

/// Compares `analytic` against central differences of the objective.
pub fn compare_gradients(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
    analytic: &GradSet,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let flat = analytic.flatten();
    let n = flat.len();
    let indices: Vec<usize> = if n > FULL_CHECK_LIMIT {
        let mut v = sample(&mut SeedTree::new(n as u64).stream("gradcheck"), n, FULL_CHECK_LIMIT).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        checked: indices.len(),
        pass: true,
    };
    for &i in &indices {
        let plus = perturbed_loss(state, batch, bank, objective, i, step)?;
        let minus = perturbed_loss(state, batch, bank, objective, i, -step)?;
        let numeric = (plus - minus) / (2.0 * step);
        let rel = relative_error(flat[i], numeric);
        report.max_abs_err = report.max_abs_err.max((flat[i] - numeric).abs());
        if rel > report.max_rel_err || !rel.is_finite() {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_err < tol;
    Ok(report)
}

pub fn finite_difference_check(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = compute_gradients(state, batch, bank, objective)?;
    compare_gradients(state, batch, bank, objective, &grads, step, tol)
}
