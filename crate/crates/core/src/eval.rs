//! Thresholded open-set inference, closed-set accuracy and the H-score sweep.
//!
//! A sample is rejected as open when its maximum softmax probability falls
//! below the threshold. Open predictions and open ground-truth labels share
//! the sentinel index `C` (the number of known classes).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{argmax, softmax_rows, HeadParams, MlpParams, ModelState};

/// Number of thresholds in a sweep.
pub const SWEEP_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Known class index, or the open sentinel `C`.
    pub label: usize,
    pub max_confidence: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn is_open(&self) -> bool {
        self.label == self.probabilities.len()
    }
}

/// Softmax outputs of `h(f(x))`, one row per input.
pub fn probabilities(f: &MlpParams, h: &HeadParams, x: &Matrix) -> Result<Matrix> {
    softmax_rows(&h.forward(&f.forward(x)?)?)
}

fn decide(p: &[f64], threshold: f64) -> (usize, f64) {
    let k = argmax(p);
    let conf = p[k];
    if conf < threshold {
        (p.len(), conf)
    } else {
        (k, conf)
    }
}

/// Thresholded predictions for each row of `x`.
pub fn predict_with_threshold(state: &ModelState, x: &Matrix, threshold: f64) -> Result<Vec<Prediction>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {threshold} outside (0, 1)")));
    }
    let p = probabilities(&state.f, &state.h, x)?;
    Ok(p.iter_rows()
        .map(|row| {
            let (label, max_confidence) = decide(row, threshold);
            Prediction {
                label,
                max_confidence,
                probabilities: row.to_vec(),
            }
        })
        .collect())
}

/// Closed-set argmax accuracy of `h ∘ f` on `data`.
pub fn accuracy(f: &MlpParams, h: &HeadParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Undefined(format!("accuracy on empty {} data", data.role.name())));
    }
    let p = probabilities(f, h, &data.x)?;
    let correct = p.iter_rows().zip(&data.y).filter(|(row, &y)| argmax(row) == y).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Closed-set accuracy on target samples of known classes.
pub fn accuracy_known(state: &ModelState, target_known: &Dataset) -> Result<f64> {
    let c = state.num_classes();
    if let Some(&y) = target_known.y.iter().find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label: y, classes: c });
    }
    accuracy(&state.f, &state.h, target_known)
}

/// Harmonic mean `2ab/(a+b)`, zero when both are zero.
pub fn h_score(acc_known: f64, acc_open: f64) -> f64 {
    let s = acc_known + acc_open;
    if s == 0.0 {
        0.0
    } else {
        2.0 * acc_known * acc_open / s
    }
}

/// The sweep grid `k/(SWEEP_SIZE+1)` for `k = 1..=SWEEP_SIZE`.
pub fn sweep_thresholds() -> Vec<f64> {
    (1..=SWEEP_SIZE).map(|k| k as f64 / (SWEEP_SIZE + 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    /// Fraction of known samples predicted as their own class; `None` without
    /// known samples.
    pub acc_known: Option<f64>,
    /// Fraction of open samples rejected; `None` without open samples.
    pub acc_open: Option<f64>,
    pub h_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_classes: usize,
    pub n_known: usize,
    pub n_open: usize,
    /// Closed-set accuracy on known-class target samples.
    pub acc_known: f64,
    pub sweep: Vec<SweepRow>,
    pub best_threshold: f64,
    pub best_h_score: f64,
    /// Set when one population is missing and every H-score is forced to 0.
    pub h_score_undefined: bool,
    /// `(C+1) × (C+1)` counts at the best threshold; row = truth, column =
    /// prediction, index `C` = open.
    pub confusion: Vec<Vec<usize>>,
    /// Closed-set accuracy per known class (`None` when absent from target).
    pub per_class_acc: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("threshold,acc_known,acc_open,h_score\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.sweep {
            s.push_str(&format!("{},{},{},{}\n", r.threshold, opt(r.acc_known), opt(r.acc_open), r.h_score));
        }
        s
    }
}

/// Evaluates `h ∘ f` on a labelled target set holding known (`y < C`) and
/// open (`y ≥ C`) samples.
pub fn evaluate_with(f: &MlpParams, h: &HeadParams, target: &Dataset) -> Result<EvalReport> {
    if target.is_empty() {
        return Err(Error::Undefined("evaluation on an empty target".into()));
    }
    let c = h.num_classes();
    let probs = probabilities(f, h, &target.x)?;
    let truth: Vec<usize> = target.y.iter().map(|&y| y.min(c)).collect();
    let n_known = truth.iter().filter(|&&t| t < c).count();
    let n_open = truth.len() - n_known;

    let mut class_total = vec![0usize; c];
    let mut class_hit = vec![0usize; c];
    for (row, &t) in probs.iter_rows().zip(&truth) {
        if t < c {
            class_total[t] += 1;
            if argmax(row) == t {
                class_hit[t] += 1;
            }
        }
    }
    let acc_known = if n_known == 0 {
        0.0
    } else {
        class_hit.iter().sum::<usize>() as f64 / n_known as f64
    };
    let per_class_acc = class_total
        .iter()
        .zip(&class_hit)
        .map(|(&n, &k)| (n > 0).then(|| k as f64 / n as f64))
        .collect();

    let undefined = n_known == 0 || n_open == 0;
    let mut sweep = Vec::with_capacity(SWEEP_SIZE);
    for tau in sweep_thresholds() {
        let mut known_hit = 0usize;
        let mut open_hit = 0usize;
        for (row, &t) in probs.iter_rows().zip(&truth) {
            let (label, _) = decide(row, tau);
            if label == t {
                if t < c {
                    known_hit += 1;
                } else {
                    open_hit += 1;
                }
            }
        }
        let a = (n_known > 0).then(|| known_hit as f64 / n_known as f64);
        let b = (n_open > 0).then(|| open_hit as f64 / n_open as f64);
        let h = match (a, b) {
            (Some(a), Some(b)) => h_score(a, b),
            _ => 0.0,
        };
        sweep.push(SweepRow {
            threshold: tau,
            acc_known: a,
            acc_open: b,
            h_score: h,
        });
    }
    let mut best = 0;
    for (i, r) in sweep.iter().enumerate() {
        if r.h_score > sweep[best].h_score {
            best = i;
        }
    }
    let best_threshold = sweep[best].threshold;
    let mut confusion = vec![vec![0usize; c + 1]; c + 1];
    for (row, &t) in probs.iter_rows().zip(&truth) {
        confusion[t][decide(row, best_threshold).0] += 1;
    }
    Ok(EvalReport {
        num_classes: c,
        n_known,
        n_open,
        acc_known,
        best_h_score: sweep[best].h_score,
        best_threshold,
        sweep,
        h_score_undefined: undefined,
        confusion,
        per_class_acc,
    })
}

/// Full open-set evaluation of the live model.
pub fn threshold_sweep(state: &ModelState, target: &Dataset) -> Result<EvalReport> {
    evaluate_with(&state.f, &state.h, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_score_values() {
        assert_eq!(h_score(1.0, 1.0), 1.0);
        assert_eq!(h_score(0.7, 0.0), 0.0);
        assert_eq!(h_score(0.0, 0.0), 0.0);
        assert!((h_score(0.6, 0.3) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(&[0.05, 0.9, 0.05], 0.5), (1, 0.9));
        assert_eq!(decide(&[0.4, 0.3, 0.3], 0.5).0, 3);
        assert_eq!(decide(&[0.1, 0.4, 0.1, 0.4], 0.3).0, 1);
    }

    #[test]
    fn grid() {
        let t = sweep_thresholds();
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 1.0 / 9.0);
        assert_eq!(t[7], 8.0 / 9.0);
    }
}
