use std::collections::BTreeSet;

use rpf::data::{
    build_class_split, generate_benchmark, generate_domain, load_benchmark, save_benchmark, split_train_val,
    BenchmarkConfig, Dataset, DomainSpec, Preset, Role,
};
use rpf::linalg::Matrix;
use rpf::rng::SeedTree;
use rpf::Error;

fn small() -> BenchmarkConfig {
    BenchmarkConfig {
        source_samples_per_class: 40,
        target_samples_per_class: 20,
        pretext_samples_per_class: 20,
        ..BenchmarkConfig::default()
    }
}

#[test]
fn pacs_like_split() {
    let s = Preset::PacsLike.split();
    let sets: Vec<Vec<usize>> = s.source_label_sets.iter().map(|s| s.iter().copied().collect()).collect();
    assert_eq!(sets, vec![vec![0, 1, 3], vec![0, 2, 4], vec![1, 2, 5]]);
    assert_eq!(s.known, (0..6).collect::<Vec<_>>());
    assert_eq!(s.open_class_ids, BTreeSet::from([6]));
    assert_eq!(s.open_sentinel(), 6);
}

#[test]
fn office_home_like_split_shape() {
    let s = Preset::OfficeHomeLike.split();
    assert_eq!(s.num_known(), 54);
    assert_eq!(s.open_class_ids.len(), 11);
    assert!(s.target_known.len() < 54);
}

#[test]
fn custom_split_errors() {
    assert!(matches!(
        build_class_split(&[vec![0, 1]], &[0], &[2]).unwrap_err(),
        Error::InvalidSplit(_)
    ));
    assert!(build_class_split(&[vec![0, 1], vec![]], &[0], &[2]).is_err());
    assert!(build_class_split(&[vec![0, 2], vec![0]], &[0], &[3]).is_err());
    assert!(build_class_split(&[vec![0, 1], vec![1]], &[0], &[1]).is_err());
    assert!(build_class_split(&[vec![0, 1], vec![1]], &[5], &[2]).is_err());
    assert!(build_class_split(&[vec![0, 1], vec![1, 2]], &[0, 2], &[3, 4]).is_ok());
}

fn spec(transform: Matrix, shift: Vec<f64>, noise: f64, n: usize) -> DomainSpec {
    DomainSpec {
        domain_id: 0,
        transform,
        shift,
        noise_scale: noise,
        samples_per_class: n,
    }
}

#[test]
fn noiseless_identity_domain_reproduces_the_means() {
    let means = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
    let d = generate_domain(
        &spec(Matrix::identity(2), vec![0.0; 2], 0.0, 3),
        Role::Train,
        &[1, 0],
        &means,
        &mut SeedTree::new(0).stream("d"),
    )
    .unwrap();
    assert_eq!(d.y, vec![1, 1, 1, 0, 0, 0]);
    for (r, &y) in d.y.iter().enumerate() {
        assert_eq!(d.x.row(r), means.row(y));
    }
}

#[test]
fn singular_transform_is_rejected() {
    let means = Matrix::zeros(1, 2);
    let flat = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let err = generate_domain(
        &spec(flat, vec![0.0; 2], 0.1, 2),
        Role::Train,
        &[0],
        &means,
        &mut SeedTree::new(0).stream("d"),
    )
    .unwrap_err();
    assert!(matches!(err, Error::SingularTransform(_)));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn benchmark_counts_follow_the_split() {
    let cfg = small();
    let b = generate_benchmark(&cfg, 3).unwrap();
    assert_eq!(b.sources.len(), 3);
    for (src, set) in b.sources.iter().zip(&b.class_split.source_label_sets) {
        assert_eq!(src.train.len() + src.val.len(), set.len() * 40);
        assert_eq!(src.train.classes(), set.iter().copied().collect::<Vec<_>>());
        assert_eq!(src.val.classes(), src.train.classes());
        assert_eq!(src.val.len(), set.len() * 4);
        assert_eq!(src.train.role, Role::Train);
    }
    assert_eq!(b.target.role, Role::Target);
    assert_eq!(b.target.len(), 7 * 20);
    assert_eq!(b.target_known().len(), 6 * 20);
    assert!(b.target.x.is_finite());
}

#[test]
fn same_seed_same_bytes() {
    let a = generate_benchmark(&small(), 11).unwrap();
    let b = generate_benchmark(&small(), 11).unwrap();
    let c = generate_benchmark(&small(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.target.x, c.target.x);
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = BenchmarkConfig {
        val_fraction: 1.0,
        ..small()
    };
    assert!(matches!(generate_benchmark(&cfg, 0).unwrap_err(), Error::InvalidConfig(_)));
}

#[test]
fn stratified_split_sizes() {
    let x = Matrix::zeros(100, 1);
    let d = Dataset::new(0, Role::Train, x, vec![0; 100]).unwrap();
    let mut rng = SeedTree::new(0).stream("split");
    let (train, val) = split_train_val(&d, 0.1, Role::Val, Role::Train, &mut rng).unwrap();
    assert_eq!((train.len(), val.len()), (90, 10));

    let y: Vec<usize> = (0..100).map(|i| i / 50).collect();
    let d = Dataset::new(0, Role::Train, Matrix::zeros(100, 1), y).unwrap();
    let (_, val) = split_train_val(&d, 0.1, Role::Val, Role::Train, &mut rng).unwrap();
    assert_eq!(val.filter(|y| y == 0).len(), 5);
    assert_eq!(val.filter(|y| y == 1).len(), 5);
    assert_eq!(val.role, Role::Val);
}

#[test]
fn target_domain_is_shifted_but_classes_stay_separable() {
    let b = generate_benchmark(&small(), 5).unwrap();
    let train = b.source_train().unwrap();
    let c = b.num_known();
    let dim = b.input_dim();
    let mut means = vec![vec![0.0; dim]; c];
    let mut counts = vec![0.0; c];
    for (r, &y) in train.y.iter().enumerate() {
        counts[y] += 1.0;
        for (m, v) in means[y].iter_mut().zip(train.x.row(r)) {
            *m += v;
        }
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n);
    }
    let classify = |data: &Dataset| {
        let hits = data
            .y
            .iter()
            .enumerate()
            .filter(|&(r, &y)| {
                let row = data.x.row(r);
                let best = (0..c)
                    .min_by(|&a, &b| {
                        let da: f64 = row.iter().zip(&means[a]).map(|(p, q)| (p - q).powi(2)).sum();
                        let db: f64 = row.iter().zip(&means[b]).map(|(p, q)| (p - q).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == y
            })
            .count();
        hits as f64 / data.len() as f64
    };
    let val = b.source_val().unwrap();
    let source_acc = classify(&val);
    let target_acc = classify(&b.target_known());
    assert!(source_acc > 0.5, "source nearest-mean accuracy {source_acc}");
    assert!(target_acc > 1.0 / c as f64, "target nearest-mean accuracy {target_acc}");
}

#[test]
fn benchmark_survives_a_disk_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let b = generate_benchmark(&small(), 2).unwrap();
    save_benchmark(&b, dir.path()).unwrap();
    let back = load_benchmark(dir.path()).unwrap();
    assert_eq!(back.target, b.target);
    assert_eq!(back.sources, b.sources);
    assert_eq!(back.class_split, b.class_split);
}
