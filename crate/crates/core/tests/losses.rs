mod common;

use rpf::data::{Dataset, Role, SourceDomain};
use rpf::linalg::Matrix;
use rpf::losses::{
    compute_gradients, compute_prototypes, loss_fr, loss_hr, loss_hr_variant, loss_total, Batch, LossBreakdown,
    LossSpec, PrototypeBank, Variant,
};
use rpf::nn::{Activation, Dense, Frozen, HeadParams, MlpParams, ModelState};
use rpf::rng::SeedTree;
use rpf::Error;

fn identity(d: usize) -> MlpParams {
    MlpParams::new(
        vec![Dense {
            weight: Matrix::identity(d),
            bias: vec![0.0; d],
        }],
        Activation::Relu,
    )
    .unwrap()
}

fn source(domain_id: usize, rows: &[Vec<f64>], y: Vec<usize>) -> SourceDomain {
    let train = Dataset::new(domain_id, Role::Train, Matrix::from_rows(rows).unwrap(), y).unwrap();
    let val = train.subset(&[0], Role::Val);
    SourceDomain { domain_id, train, val }
}

fn bank(rows: &[Vec<f64>]) -> PrototypeBank {
    PrototypeBank::new(Matrix::from_rows(rows).unwrap(), vec![1; rows.len()]).unwrap()
}

#[test]
fn prototype_is_the_class_mean() {
    let s = source(0, &[vec![1.0, 3.0], vec![3.0, 5.0]], vec![0, 0]);
    let b = compute_prototypes(&identity(2), &[s], 1).unwrap();
    assert_eq!(b.prototype(0).unwrap(), &[2.0, 4.0]);
}

#[test]
fn prototypes_pool_samples_across_domains() {
    let a = source(0, &[vec![0.0, 0.0]], vec![0]);
    let b = source(1, &[vec![4.0, 0.0], vec![4.0, 0.0], vec![4.0, 0.0]], vec![0, 0, 0]);
    let bank = compute_prototypes(&identity(2), &[a, b], 1).unwrap();
    assert_eq!(bank.prototype(0).unwrap(), &[3.0, 0.0]);
    assert_eq!(bank.counts(), &[4]);
}

#[test]
fn class_without_samples_is_an_error() {
    let s = source(0, &[vec![1.0, 1.0]], vec![0]);
    assert!(matches!(compute_prototypes(&identity(2), &[s], 2).unwrap_err(), Error::EmptyClass(1)));
}

#[test]
fn prototypes_refuse_target_data() {
    let mut s = source(0, &[vec![1.0, 1.0]], vec![0]);
    s.train.role = Role::Target;
    assert!(matches!(compute_prototypes(&identity(2), &[s], 1).unwrap_err(), Error::TargetLeak(_)));
}

#[test]
fn feature_regularizer_values() {
    let f = identity(2);
    let b = bank(&[vec![0.0, 0.0]]);
    let batch = |rows: &[Vec<f64>]| Batch::new(Matrix::from_rows(rows).unwrap(), vec![0; rows.len()]).unwrap();
    assert_eq!(loss_fr(&f, &batch(&[vec![3.0, 4.0]]), &b).unwrap(), 25.0);
    assert_eq!(loss_fr(&f, &batch(&[vec![0.0, 0.0]]), &b).unwrap(), 0.0);
    assert_eq!(loss_fr(&f, &batch(&[vec![3.0, 4.0], vec![0.0, 0.0]]), &b).unwrap(), 12.5);
}

#[test]
fn head_regularizer_values() {
    let h = HeadParams::new(Matrix::zeros(6, 2), vec![0.0; 6]).unwrap();
    let v = loss_hr(&h, &Matrix::from_rows(&[vec![1.0, -1.0], vec![0.3, 2.0]]).unwrap()).unwrap();
    assert!((v + 6f64.ln()).abs() < 1e-12);

    let ln2 = 2f64.ln();
    let h = HeadParams::new(Matrix::zeros(3, 1), vec![ln2, 0.0, 0.0]).unwrap();
    let v = loss_hr(&h, &Matrix::zeros(1, 1)).unwrap();
    let expected = 0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln();
    assert!((v - expected).abs() < 1e-12);
    assert!((v - -1.03972).abs() < 1e-5);
}

fn twin_state() -> (ModelState, Batch) {
    let seeds = SeedTree::new(5);
    let f0 = MlpParams::init(&[3, 4], Activation::Relu, &seeds, "f0").unwrap();
    let h = HeadParams::init(4, 3, &seeds, "h");
    let state = ModelState::from_parts(f0.clone(), h.clone(), Frozen::new(f0), Some(Frozen::new(h))).unwrap();
    let mut rng = seeds.stream("x");
    let x = common::random_matrix(&mut rng, 5, 3, 1.0);
    (state, Batch::new(x, vec![0, 1, 2, 0, 1]).unwrap())
}

#[test]
fn ablation_regularizers_match_their_definitions() {
    let (state, batch) = twin_state();
    let base = loss_hr(&state.h, &state.f0().forward(&batch.x).unwrap()).unwrap();
    assert_eq!(loss_hr_variant(Variant::EntMinHr, &state, &batch).unwrap(), -base);
    assert_eq!(loss_hr_variant(Variant::HrF, &state, &batch).unwrap(), base);
    assert!(loss_hr_variant(Variant::Rpf, &state, &batch).is_err());
}

#[test]
fn weighted_total_combines_components() {
    let b = LossBreakdown::combine(&LossSpec::new(Variant::Rpf, 0.1), 1.0, 0.5, -1.0);
    assert!((b.total - 1.4).abs() < 1e-15);
    let no_hr = LossBreakdown::combine(&LossSpec::new(Variant::NoHr, 0.1), 1.0, 0.5, -1.0);
    assert_eq!(no_hr.total, 1.5);
    let no_fr = LossBreakdown::combine(&LossSpec::new(Variant::NoFr, 0.1), 1.0, 0.5, -1.0);
    assert!((no_fr.total - 0.9).abs() < 1e-15);
}

#[test]
fn loss_total_matches_its_parts() {
    let t = common::tiny(3, Activation::Tanh, &[4, 6, 5], 3, 9);
    let spec = LossSpec::new(Variant::Rpf, 0.1);
    let b = loss_total(&t.state, &t.batch, Some(&t.bank), &spec).unwrap();
    let fr = loss_fr(&t.state.f, &t.batch, &t.bank).unwrap();
    let hr = loss_hr(&t.state.h, &t.state.f0().forward(&t.batch.x).unwrap()).unwrap();
    assert!((b.fr - fr).abs() < 1e-12);
    assert!((b.hr - hr).abs() < 1e-12);
    assert!((b.total - (b.lpft + fr + 0.1 * hr)).abs() < 1e-12);
}

#[test]
fn feature_regularizer_without_bank_is_an_error() {
    let t = common::tiny(3, Activation::Relu, &[4, 5], 3, 4);
    let err = loss_total(&t.state, &t.batch, None, &LossSpec::new(Variant::Rpf, 0.1)).unwrap_err();
    assert!(matches!(err, Error::MissingPrototypeBank));
    assert!(loss_total(&t.state, &t.batch, None, &LossSpec::new(Variant::NoFr, 0.1)).is_ok());
}

#[test]
fn negative_lambda_is_rejected() {
    let t = common::tiny(3, Activation::Relu, &[4, 5], 3, 4);
    let err = loss_total(&t.state, &t.batch, Some(&t.bank), &LossSpec::new(Variant::Rpf, -0.1)).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

#[test]
fn regularizer_gradients_are_routed() {
    let t = common::tiny(8, Activation::Relu, &[4, 6, 5], 3, 6);
    let fr_only = rpf::losses::Objective {
        fr: 1.0,
        ..rpf::losses::Objective::NONE
    };
    let (_, g) = compute_gradients(&t.state, &t.batch, Some(&t.bank), &fr_only).unwrap();
    assert!(g.is_zero_h() && !g.is_zero_f());
    let hr_only = rpf::losses::Objective {
        hr: 1.0,
        ..rpf::losses::Objective::NONE
    };
    let (_, g) = compute_gradients(&t.state, &t.batch, None, &hr_only).unwrap();
    assert!(g.is_zero_f() && !g.is_zero_h());
}

#[test]
fn variant_table() {
    let rows: Vec<(Variant, bool, bool, bool)> = Variant::ALL
        .iter()
        .map(|&v| (v, v.has_fr(), v.has_hr(), v.uses_pretrained_head()))
        .collect();
    assert_eq!(
        rows,
        vec![
            (Variant::Lpft, false, false, true),
            (Variant::NoHr, true, false, true),
            (Variant::NoFr, false, true, true),
            (Variant::NoPretrainedHead, true, true, false),
            (Variant::HrF, true, true, true),
            (Variant::EntMinHr, true, true, true),
            (Variant::Rpf, true, true, true),
        ]
    );
}
