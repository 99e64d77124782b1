//! Softmax, cross-entropy and entropy primitives.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Log-softmax of one logit row, shifted by the row maximum.
pub fn log_softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in z {
        sum += (v - max).exp();
    }
    let lse = sum.ln();
    Ok(z.iter().map(|&v| v - max - lse).collect())
}

pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = 0.0;
    for v in &p {
        sum += v;
    }
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r))?;
        out.row_mut(r).copy_from_slice(&p);
    }
    Ok(out)
}

/// `Σ p ln p` with `0 · ln 0 := 0`. Lies in `[-ln C, 0]`.
pub fn neg_entropy(p: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in p {
        if v > 0.0 {
            s += v * v.ln();
        }
    }
    s
}

pub fn entropy(p: &[f64]) -> f64 {
    -neg_entropy(p)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.cols(),
        });
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        total -= log_softmax(logits.row(r))?[y];
    }
    Ok(total / labels.len() as f64)
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
pub(crate) fn cross_entropy_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (r, &y) in labels.iter().enumerate() {
        let lp = log_softmax(logits.row(r))?;
        total -= lp[y];
        let g = grad.row_mut(r);
        for (c, gc) in g.iter_mut().enumerate() {
            let p = lp[c].exp();
            *gc = (p - if c == y { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean negative entropy `Σ p ln p` of the softmax rows, with its gradient
/// w.r.t. the logits: `∂/∂z_k = p_k (ln p_k − Σ_j p_j ln p_j)`.
pub(crate) fn neg_entropy_grad(logits: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    let n = logits.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let lp = log_softmax(logits.row(r))?;
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let mut s = 0.0;
        for (pi, li) in p.iter().zip(&lp) {
            s += pi * li;
        }
        total += s;
        let g = grad.row_mut(r);
        for c in 0..p.len() {
            g[c] = p[c] * (lp[c] - s) / n;
        }
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_and_shift_stable() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        // e^1, e^2, e^3 evaluated independently in extended precision (mpmath, 30 digits)
        let expected = [
            0.090_030_573_170_380_458_0,
            0.244_728_471_054_797_652_5,
            0.665_240_955_774_821_889_5,
        ];
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = Matrix::zeros(2, 6);
        let ce = cross_entropy(&uniform, &[0, 5]).unwrap();
        assert!((ce - 6f64.ln()).abs() < 1e-15);

        let confident = Matrix::from_rows(&[vec![1000.0, 0.0, 0.0]]).unwrap();
        assert!(cross_entropy(&confident, &[0]).unwrap() < 1e-300);

        // ln(e + e^2 + e^3) - 3, extended precision
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let ce = cross_entropy(&z, &[2]).unwrap();
        assert!((ce - 0.407_605_964_444_380_304_5).abs() < 1e-15);

        assert!(matches!(
            cross_entropy(&z, &[3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn entropy_conventions() {
        assert_eq!(neg_entropy(&[1.0, 0.0, 0.0]), 0.0);
        let v = neg_entropy(&[0.5, 0.25, 0.25]);
        assert!((v - (-1.039_720_770_839_917_964)).abs() < 1e-15);
        assert_eq!(argmax(&[0.1, 0.4, 0.1, 0.4]), 1);
    }
}
