//! Weighted sum of loss terms with per-term gradient routing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::terms::fr_from_features;
use crate::losses::{LossSpec, PrototypeBank};
use crate::nn::{cross_entropy_grad, neg_entropy_grad, GradSet, ModelState};

/// A mini-batch of inputs with known-class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} inputs for {} labels", x.rows(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Which features the head regularizer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HrInput {
    /// Frozen pretrained features `f0(x)`.
    Pretrained,
    /// Live features `f(x)`, treated as constants.
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HrMode {
    /// Term value `Σ p ln p`; descending it raises entropy.
    MaximizeEntropy,
    /// Term value `−Σ p ln p`.
    MinimizeEntropy,
}

/// Coefficients of each loss term. A zero coefficient skips the term.
///
/// Routing:
/// * `lp`: `h` only (features come from `f0`).
/// * `lpft`: `f` and `h`.
/// * `fr`: `f` only.
/// * `hr`: `h` only, whatever `hr_input` is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub lp: f64,
    pub lpft: f64,
    pub fr: f64,
    pub hr: f64,
    pub hr_input: HrInput,
    pub hr_mode: HrMode,
}

impl Objective {
    pub const NONE: Objective = Objective {
        lp: 0.0,
        lpft: 0.0,
        fr: 0.0,
        hr: 0.0,
        hr_input: HrInput::Pretrained,
        hr_mode: HrMode::MaximizeEntropy,
    };

    /// Linear probing: cross-entropy on frozen features.
    pub fn linear_probe() -> Self {
        Objective { lp: 1.0, ..Self::NONE }
    }

    pub fn needs_bank(&self) -> bool {
        self.fr != 0.0
    }
}

/// Per-term values (unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub lp: f64,
    pub lpft: f64,
    pub fr: f64,
    /// Head-regularizer value as the variant defines it.
    pub hr: f64,
}

impl LossBreakdown {
    /// `lpft + fr_weight·fr + λ·hr` under the spec's active terms.
    pub fn combine(spec: &LossSpec, lpft: f64, fr: f64, hr: f64) -> Self {
        let obj = spec.objective();
        let mut total = obj.lpft * lpft;
        if obj.fr != 0.0 {
            total += obj.fr * fr;
        }
        if obj.hr != 0.0 {
            total += obj.hr * hr;
        }
        LossBreakdown {
            total,
            lp: 0.0,
            lpft,
            fr: if obj.fr != 0.0 { fr } else { 0.0 },
            hr: if obj.hr != 0.0 { hr } else { 0.0 },
        }
    }
}

fn evaluate(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    obj: &Objective,
    mut grads: Option<&mut GradSet>,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    if obj.needs_bank() && bank.is_none() {
        return Err(Error::MissingPrototypeBank);
    }
    let mut out = LossBreakdown::default();
    let hr_sign = match obj.hr_mode {
        HrMode::MaximizeEntropy => 1.0,
        HrMode::MinimizeEntropy => -1.0,
    };

    let live_hr = obj.hr != 0.0 && obj.hr_input == HrInput::Live;
    if obj.lpft != 0.0 || obj.fr != 0.0 || live_hr {
        let trace = state.f.forward_trace(&batch.x)?;
        let feats = trace.output();
        let mut d_feats = Matrix::zeros(feats.rows(), feats.cols());

        if obj.lpft != 0.0 {
            let logits = state.h.forward(feats)?;
            let (loss, mut d_logits) = cross_entropy_grad(&logits, &batch.y)?;
            out.lpft = loss;
            out.total += obj.lpft * loss;
            if let Some(g) = grads.as_deref_mut() {
                if obj.lpft != 1.0 {
                    d_logits.map_inplace(|v| v * obj.lpft);
                }
                state.h.backward(feats, &d_logits, &mut g.h, Some(&mut d_feats))?;
            }
        }

        if obj.fr != 0.0 {
            let bank = bank.ok_or(Error::MissingPrototypeBank)?;
            let loss = fr_from_features(feats, &batch.y, bank)?;
            out.fr = loss;
            out.total += obj.fr * loss;
            if grads.is_some() {
                let scale = 2.0 * obj.fr / batch.len() as f64;
                for (r, &y) in batch.y.iter().enumerate() {
                    let p = bank.prototype(y)?;
                    for ((d, &fv), &pv) in d_feats.row_mut(r).iter_mut().zip(feats.row(r)).zip(p) {
                        *d += scale * (fv - pv);
                    }
                }
            }
        }

        if live_hr {
            let logits = state.h.forward(feats)?;
            let (value, mut d_logits) = neg_entropy_grad(&logits)?;
            out.hr = hr_sign * value;
            out.total += obj.hr * out.hr;
            if let Some(g) = grads.as_deref_mut() {
                let s = obj.hr * hr_sign;
                d_logits.map_inplace(|v| v * s);
                // Live features are constants for this term.
                state.h.backward(feats, &d_logits, &mut g.h, None)?;
            }
        }

        if let Some(g) = grads.as_deref_mut() {
            if obj.lpft != 0.0 || obj.fr != 0.0 {
                state.f.backward(&trace, d_feats, &mut g.f)?;
            }
        }
    }

    let pretrained_hr = obj.hr != 0.0 && obj.hr_input == HrInput::Pretrained;
    if obj.lp != 0.0 || pretrained_hr {
        let feats = state.f0().forward(&batch.x)?;
        let logits = state.h.forward(&feats)?;
        if obj.lp != 0.0 {
            let (loss, mut d_logits) = cross_entropy_grad(&logits, &batch.y)?;
            out.lp = loss;
            out.total += obj.lp * loss;
            if let Some(g) = grads.as_deref_mut() {
                if obj.lp != 1.0 {
                    d_logits.map_inplace(|v| v * obj.lp);
                }
                state.h.backward(&feats, &d_logits, &mut g.h, None)?;
            }
        }
        if pretrained_hr {
            let (value, mut d_logits) = neg_entropy_grad(&logits)?;
            out.hr = hr_sign * value;
            out.total += obj.hr * out.hr;
            if let Some(g) = grads.as_deref_mut() {
                let s = obj.hr * hr_sign;
                d_logits.map_inplace(|v| v * s);
                state.h.backward(&feats, &d_logits, &mut g.h, None)?;
            }
        }
    }
    Ok(out)
}

/// Exact gradients of the weighted objective w.r.t. `f` and `h`.
///
/// Frozen snapshots and the prototype bank never receive gradients; there are
/// no buffers for them.
pub fn compute_gradients(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
) -> Result<(LossBreakdown, GradSet)> {
    let mut grads = GradSet::zeros_for(state);
    let losses = evaluate(state, batch, bank, objective, Some(&mut grads))?;
    Ok((losses, grads))
}

/// Value of the variant's full objective, with each component.
pub fn loss_total(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    spec: &LossSpec,
) -> Result<LossBreakdown> {
    spec.validate()?;
    if spec.variant.uses_pretrained_head() && state.h_lp().is_none() {
        return Err(Error::MissingHeadSnapshot);
    }
    evaluate(state, batch, bank, &spec.objective(), None)
}

/// Forward-only evaluation of an arbitrary objective.
pub fn objective_value(
    state: &ModelState,
    batch: &Batch,
    bank: Option<&PrototypeBank>,
    objective: &Objective,
) -> Result<LossBreakdown> {
    evaluate(state, batch, bank, objective, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Variant;

    #[test]
    fn linear_combination() {
        let spec = LossSpec::new(Variant::Rpf, 0.1);
        let b = LossBreakdown::combine(&spec, 1.0, 0.5, -1.0);
        assert!((b.total - 1.4).abs() < 1e-15);
        let lpft = LossBreakdown::combine(&LossSpec::new(Variant::Lpft, 0.1), 1.0, 0.5, -1.0);
        assert_eq!(lpft.total, 1.0);
        assert_eq!(LossBreakdown::combine(&spec, 0.0, 0.0, 0.0).total, 0.0);
    }
}
