//! Stand-alone evaluations of the individual regularizers.

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::losses::{Batch, PrototypeBank, Variant};
use crate::nn::{neg_entropy_grad, HeadParams, MlpParams, ModelState};

/// Mean over the batch of `‖f(x) − P_y‖²₂`.
pub fn loss_fr(f: &MlpParams, batch: &Batch, bank: &PrototypeBank) -> Result<f64> {
    let feats = f.forward(&batch.x)?;
    fr_from_features(&feats, &batch.y, bank)
}

pub(crate) fn fr_from_features(feats: &Matrix, labels: &[usize], bank: &PrototypeBank) -> Result<f64> {
    if feats.cols() != bank.feature_dim() {
        return Err(Error::shape("feature width differs from prototype width"));
    }
    if labels.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        total += squared_distance(feats.row(r), bank.prototype(y)?);
    }
    Ok(total / labels.len() as f64)
}

/// Mean over the batch of `Σ_c σ(z)_c ln σ(z)_c` with `z = h(features)`.
pub fn loss_hr(h: &HeadParams, f0_features: &Matrix) -> Result<f64> {
    let logits = h.forward(f0_features)?;
    Ok(neg_entropy_grad(&logits)?.0)
}

/// Head-regularizer ablations: `HrF` evaluates the entropy term on live
/// features, `EntMinHr` is the negated (entropy-minimizing) term.
pub fn loss_hr_variant(variant: Variant, state: &ModelState, batch: &Batch) -> Result<f64> {
    match variant {
        Variant::HrF => loss_hr(&state.h, &state.f.forward(&batch.x)?),
        Variant::EntMinHr => Ok(-loss_hr(&state.h, &state.f0().forward(&batch.x)?)?),
        other => Err(Error::InvalidConfig(format!(
            "`{other}` is not a head-regularizer variant"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, Frozen};
    use crate::rng::SeedTree;

    fn identity_f(d: usize) -> MlpParams {
        MlpParams::new(
            vec![Dense {
                weight: Matrix::identity(d),
                bias: vec![0.0; d],
            }],
            Activation::Relu,
        )
        .unwrap()
    }

    #[test]
    fn fr_examples() {
        let bank = PrototypeBank::new(Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap(), vec![1]).unwrap();
        let f = identity_f(2);
        let far = Batch::new(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), vec![0]).unwrap();
        assert_eq!(loss_fr(&f, &far, &bank).unwrap(), 25.0);
        let on = Batch::new(Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap(), vec![0]).unwrap();
        assert_eq!(loss_fr(&f, &on, &bank).unwrap(), 0.0);
        let both = Batch::new(Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap(), vec![0, 0]).unwrap();
        assert_eq!(loss_fr(&f, &both, &bank).unwrap(), 12.5);
        let missing = Batch::new(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), vec![1]).unwrap();
        assert!(matches!(loss_fr(&f, &missing, &bank), Err(Error::MissingPrototype(1))));
    }

    #[test]
    fn hr_examples() {
        let uniform = HeadParams::new(Matrix::zeros(6, 3), vec![0.0; 6]).unwrap();
        let v = loss_hr(&uniform, &Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap()).unwrap();
        assert!((v + 6f64.ln()).abs() < 1e-15);

        let peaked = HeadParams::new(Matrix::zeros(3, 1), vec![800.0, 0.0, 0.0]).unwrap();
        let v = loss_hr(&peaked, &Matrix::zeros(2, 1)).unwrap();
        assert!(v <= 0.0 && v > -1e-300);

        // σ = [0.5, 0.25, 0.25] from logits [ln 2, 0, 0]
        let h = HeadParams::new(Matrix::zeros(3, 1), vec![2f64.ln(), 0.0, 0.0]).unwrap();
        let v = loss_hr(&h, &Matrix::zeros(1, 1)).unwrap();
        assert!((v - (-1.039_720_770_839_917_964)).abs() < 1e-15);
    }

    #[test]
    fn variants_relate_to_base_term() {
        let seeds = SeedTree::new(3);
        let f0 = MlpParams::init(&[4, 5], Activation::Tanh, &seeds, "f0").unwrap();
        let h = HeadParams::init(5, 3, &seeds, "h");
        let state = ModelState::from_pretrained(Frozen::new(f0.clone()), h.clone()).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, -0.3, 1.0], vec![2.0, -1.0, 0.0, 0.5]]).unwrap();
        let batch = Batch::new(x.clone(), vec![0, 2]).unwrap();
        let base = loss_hr(&h, &f0.forward(&x).unwrap()).unwrap();
        assert_eq!(loss_hr_variant(Variant::HrF, &state, &batch).unwrap(), base);
        let ent_min = loss_hr_variant(Variant::EntMinHr, &state, &batch).unwrap();
        assert_eq!(ent_min, -base);
        assert!(ent_min >= 0.0 && ent_min <= 3f64.ln());
        assert!(loss_hr_variant(Variant::Rpf, &state, &batch).is_err());
    }
}
