//! Gaussian class clusters pushed through per-domain affine transforms.
//!
//! A domain maps a latent class sample `μ_c + ε`, `ε ~ N(0, σ²I)`, to input
//! space by `x = A(μ_c + ε) + t` where `A = R · diag(s)` is a random rotation
//! (Cayley transform of a scaled skew-symmetric matrix) followed by per-axis
//! scaling, and `t` a random translation. Source and target transforms come
//! from disjoint streams, and the target rotation/translation scales are
//! larger than the sources'.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::data::split::{build_class_split, split_train_val, ClassSplit, Preset};
use crate::data::{BenchmarkBundle, Dataset, PretextData, Role, SourceDomain};
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::rng::SeedTree;

pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: usize,
    /// `(D × D)`.
    pub transform: Matrix,
    pub shift: Vec<f64>,
    pub noise_scale: f64,
    pub samples_per_class: usize,
}

impl DomainSpec {
    pub fn condition_number(&self) -> f64 {
        let n = self.transform.rows();
        let m = DMatrix::from_row_slice(n, self.transform.cols(), self.transform.as_slice());
        let sv = m.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Draws samples for each listed class through the domain transform.
pub fn generate_domain<R: Rng + ?Sized>(
    spec: &DomainSpec,
    role: Role,
    classes: &[usize],
    class_means: &Matrix,
    rng: &mut R,
) -> Result<Dataset> {
    let dim = class_means.cols();
    if spec.transform.rows() != dim || spec.transform.cols() != dim || spec.shift.len() != dim {
        return Err(Error::shape("domain transform does not match the latent dimension"));
    }
    let cond = spec.condition_number();
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularTransform(cond));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= class_means.rows()) {
        return Err(Error::InvalidConfig(format!("no class mean for class {c}")));
    }
    let n = classes.len() * spec.samples_per_class;
    let mut x = Matrix::zeros(n, dim);
    let mut y = Vec::with_capacity(n);
    let mut latent = vec![0.0; dim];
    let mut row = 0;
    for &c in classes {
        let mu = class_means.row(c);
        for _ in 0..spec.samples_per_class {
            for (l, m) in latent.iter_mut().zip(mu) {
                let e: f64 = rng.sample(StandardNormal);
                *l = m + spec.noise_scale * e;
            }
            let out = x.row_mut(row);
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = spec.shift[i];
                for (a, l) in spec.transform.row(i).iter().zip(&latent) {
                    s += a * l;
                }
                *o = s;
            }
            y.push(c);
            row += 1;
        }
    }
    Dataset::new(spec.domain_id, role, x, y)
}

/// `R · diag(s)` and a translation, with rotation strength `rotation`
/// (standard deviation of the skew generator entries scaled by `1/√D`).
pub fn random_transform<R: Rng + ?Sized>(
    dim: usize,
    rotation: f64,
    translation: f64,
    scale_range: (f64, f64),
    rng: &mut R,
) -> (Matrix, Vec<f64>) {
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let norm = rotation / (dim as f64).sqrt();
    for i in 0..dim {
        for j in (i + 1)..dim {
            let g: f64 = rng.sample(StandardNormal);
            k[(i, j)] = norm * g;
            k[(j, i)] = -norm * g;
        }
    }
    let eye = DMatrix::<f64>::identity(dim, dim);
    let inv = (&eye - &k).try_inverse().expect("I - K is invertible for skew-symmetric K");
    let rot = inv * (&eye + &k);
    let scales: Vec<f64> = (0..dim)
        .map(|_| {
            if scale_range.1 > scale_range.0 {
                rng.gen_range(scale_range.0..scale_range.1)
            } else {
                scale_range.0
            }
        })
        .collect();
    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            a.set(i, j, rot[(i, j)] * scales[j]);
        }
    }
    let shift = (0..dim)
        .map(|_| translation * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (a, shift)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitSource {
    Preset(Preset),
    Custom {
        sources: Vec<Vec<usize>>,
        target_known: Vec<usize>,
        open: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub split: SplitSource,
    pub input_dim: usize,
    pub noise_scale: f64,
    /// Standard deviation of the latent class means.
    pub mean_scale: f64,
    /// Minimum pairwise distance between class means, in units of `noise_scale`.
    pub min_separation: f64,
    pub source_samples_per_class: usize,
    pub target_samples_per_class: usize,
    pub val_fraction: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub source_rotation: f64,
    pub source_translation: f64,
    pub target_rotation: f64,
    pub target_translation: f64,
    /// Pretext classes = factor × benchmark classes (known + open).
    pub pretext_class_factor: usize,
    pub pretext_styles: usize,
    pub pretext_samples_per_class: usize,
    pub pretext_rotation: f64,
    pub pretext_translation: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            split: SplitSource::Preset(Preset::PacsLike),
            input_dim: 16,
            noise_scale: 0.1,
            mean_scale: 0.17,
            min_separation: 4.0,
            source_samples_per_class: 300,
            target_samples_per_class: 100,
            val_fraction: 0.1,
            scale_min: 0.7,
            scale_max: 1.3,
            source_rotation: 0.3,
            source_translation: 0.05,
            target_rotation: 0.6,
            target_translation: 0.1,
            pretext_class_factor: 2,
            pretext_styles: 4,
            pretext_samples_per_class: 100,
            pretext_rotation: 0.4,
            pretext_translation: 0.05,
        }
    }
}

fn join_ids(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_ids(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad class id `{t}`")))
        })
        .collect()
}

impl BenchmarkConfig {
    pub fn class_split(&self) -> Result<ClassSplit> {
        match &self.split {
            SplitSource::Preset(p) => Ok(p.split()),
            SplitSource::Custom {
                sources,
                target_known,
                open,
            } => build_class_split(sources, target_known, open),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be ≥ 0");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.source_samples_per_class < 2 || self.target_samples_per_class == 0 {
            return bad("samples per class too small");
        }
        if !(self.scale_min > 0.0 && self.scale_max >= self.scale_min) {
            return bad("scale range must be positive and ordered");
        }
        if self.pretext_class_factor == 0 || self.pretext_styles == 0 || self.pretext_samples_per_class < 2 {
            return bad("pretext settings must be positive");
        }
        self.class_split().map(|_| ())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        match &self.split {
            SplitSource::Preset(p) => kv.set("preset", p.name()),
            SplitSource::Custom {
                sources,
                target_known,
                open,
            } => {
                kv.set("preset", "custom");
                kv.set(
                    "source_sets",
                    &sources.iter().map(|s| join_ids(s)).collect::<Vec<_>>().join(";"),
                );
                kv.set("target_known", &join_ids(target_known));
                kv.set("open_classes", &join_ids(open));
            }
        }
        kv.set("input_dim", &self.input_dim.to_string());
        kv.set("noise_scale", &self.noise_scale.to_string());
        kv.set("mean_scale", &self.mean_scale.to_string());
        kv.set("min_separation", &self.min_separation.to_string());
        kv.set("source_samples_per_class", &self.source_samples_per_class.to_string());
        kv.set("target_samples_per_class", &self.target_samples_per_class.to_string());
        kv.set("val_fraction", &self.val_fraction.to_string());
        kv.set("scale_min", &self.scale_min.to_string());
        kv.set("scale_max", &self.scale_max.to_string());
        kv.set("source_rotation", &self.source_rotation.to_string());
        kv.set("source_translation", &self.source_translation.to_string());
        kv.set("target_rotation", &self.target_rotation.to_string());
        kv.set("target_translation", &self.target_translation.to_string());
        kv.set("pretext_class_factor", &self.pretext_class_factor.to_string());
        kv.set("pretext_styles", &self.pretext_styles.to_string());
        kv.set("pretext_samples_per_class", &self.pretext_samples_per_class.to_string());
        kv.set("pretext_rotation", &self.pretext_rotation.to_string());
        kv.set("pretext_translation", &self.pretext_translation.to_string());
        kv
    }

    /// Reads recognised keys from `kv` over the defaults. Unknown keys are
    /// rejected.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = BenchmarkConfig::default();
        for (key, value) in kv.iter() {
            match key {
                "preset" if value == "custom" => {
                    c.split = SplitSource::Custom {
                        sources: Vec::new(),
                        target_known: Vec::new(),
                        open: Vec::new(),
                    }
                }
                "preset" => c.split = SplitSource::Preset(value.parse()?),
                "source_sets" | "target_known" | "open_classes" => {}
                "input_dim" => c.input_dim = kv.parse(key)?,
                "noise_scale" => c.noise_scale = kv.parse(key)?,
                "mean_scale" => c.mean_scale = kv.parse(key)?,
                "min_separation" => c.min_separation = kv.parse(key)?,
                "source_samples_per_class" => c.source_samples_per_class = kv.parse(key)?,
                "target_samples_per_class" => c.target_samples_per_class = kv.parse(key)?,
                "val_fraction" => c.val_fraction = kv.parse(key)?,
                "scale_min" => c.scale_min = kv.parse(key)?,
                "scale_max" => c.scale_max = kv.parse(key)?,
                "source_rotation" => c.source_rotation = kv.parse(key)?,
                "source_translation" => c.source_translation = kv.parse(key)?,
                "target_rotation" => c.target_rotation = kv.parse(key)?,
                "target_translation" => c.target_translation = kv.parse(key)?,
                "pretext_class_factor" => c.pretext_class_factor = kv.parse(key)?,
                "pretext_styles" => c.pretext_styles = kv.parse(key)?,
                "pretext_samples_per_class" => c.pretext_samples_per_class = kv.parse(key)?,
                "pretext_rotation" => c.pretext_rotation = kv.parse(key)?,
                "pretext_translation" => c.pretext_translation = kv.parse(key)?,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown benchmark key `{other}`")))
                }
            }
        }
        if let SplitSource::Custom { .. } = c.split {
            let sources = kv
                .get("source_sets")
                .ok_or_else(|| Error::InvalidConfig("custom preset needs source_sets".into()))?
                .split(';')
                .map(parse_ids)
                .collect::<Result<Vec<_>>>()?;
            let target_known = parse_ids(kv.get("target_known").unwrap_or(""))?;
            let open = parse_ids(kv.get("open_classes").unwrap_or(""))?;
            c.split = SplitSource::Custom {
                sources,
                target_known,
                open,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn draw_class_means<R: Rng + ?Sized>(n: usize, cfg: &BenchmarkConfig, rng: &mut R) -> Result<Matrix> {
    let dim = cfg.input_dim;
    let min_sq = (cfg.min_separation * cfg.noise_scale).powi(2);
    let mut means = Matrix::zeros(n, dim);
    let mut candidate = vec![0.0; dim];
    for i in 0..n {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidConfig(
                    "could not place class means with the requested separation".into(),
                ));
            }
            for v in candidate.iter_mut() {
                *v = cfg.mean_scale * rng.sample::<f64, _>(StandardNormal);
            }
            if (0..i).all(|j| squared_distance(means.row(j), &candidate) >= min_sq) {
                break;
            }
        }
        means.row_mut(i).copy_from_slice(&candidate);
    }
    Ok(means)
}

/// Builds the full bundle deterministically from `seed`.
pub fn generate_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkBundle> {
    cfg.validate()?;
    let split = cfg.class_split()?;
    let seeds = SeedTree::new(seed).child("data");
    let dim = cfg.input_dim;
    let bench_classes = split.num_benchmark_classes();
    let pretext_classes = cfg.pretext_class_factor * bench_classes;
    let class_means = draw_class_means(pretext_classes.max(bench_classes), cfg, &mut seeds.stream("means"))?;
    let scale_range = (cfg.scale_min, cfg.scale_max);

    let mut source_specs = Vec::new();
    let mut sources = Vec::new();
    for (i, set) in split.source_label_sets.iter().enumerate() {
        let (transform, shift) = random_transform(
            dim,
            cfg.source_rotation,
            cfg.source_translation,
            scale_range,
            &mut seeds.stream(&format!("transform/source{i}")),
        );
        let spec = DomainSpec {
            domain_id: i,
            transform,
            shift,
            noise_scale: cfg.noise_scale,
            samples_per_class: cfg.source_samples_per_class,
        };
        let classes: Vec<usize> = set.iter().copied().collect();
        let all = generate_domain(
            &spec,
            Role::Train,
            &classes,
            &class_means,
            &mut seeds.stream(&format!("samples/source{i}")),
        )?;
        let (train, val) = split_train_val(
            &all,
            cfg.val_fraction,
            Role::Val,
            Role::Train,
            &mut seeds.stream(&format!("split/source{i}")),
        )?;
        sources.push(SourceDomain {
            domain_id: i,
            train,
            val,
        });
        source_specs.push(spec);
    }

    let k = split.source_label_sets.len();
    let (transform, shift) = random_transform(
        dim,
        cfg.target_rotation,
        cfg.target_translation,
        scale_range,
        &mut seeds.stream("transform/target"),
    );
    let target_spec = DomainSpec {
        domain_id: k,
        transform,
        shift,
        noise_scale: cfg.noise_scale,
        samples_per_class: cfg.target_samples_per_class,
    };
    let target = generate_domain(
        &target_spec,
        Role::Target,
        &split.target_classes(),
        &class_means,
        &mut seeds.stream("samples/target"),
    )?;

    let pretext_ids: Vec<usize> = (0..pretext_classes).collect();
    let mut pretext_specs = Vec::new();
    let mut pretext_parts = Vec::new();
    for s in 0..cfg.pretext_styles {
        let (transform, shift) = random_transform(
            dim,
            cfg.pretext_rotation,
            cfg.pretext_translation,
            scale_range,
            &mut seeds.stream(&format!("transform/pretext{s}")),
        );
        let spec = DomainSpec {
            domain_id: 100 + s,
            transform,
            shift,
            noise_scale: cfg.noise_scale,
            samples_per_class: cfg.pretext_samples_per_class,
        };
        pretext_parts.push(generate_domain(
            &spec,
            Role::PretextTrain,
            &pretext_ids,
            &class_means,
            &mut seeds.stream(&format!("samples/pretext{s}")),
        )?);
        pretext_specs.push(spec);
    }
    let pooled = Dataset::concat(&pretext_parts.iter().collect::<Vec<_>>())?;
    let (ptrain, pval) = split_train_val(
        &pooled,
        cfg.val_fraction,
        Role::PretextVal,
        Role::PretextTrain,
        &mut seeds.stream("split/pretext"),
    )?;

    Ok(BenchmarkBundle {
        config: cfg.clone(),
        seed,
        class_split: split,
        class_means,
        source_specs,
        target_spec,
        pretext_specs,
        sources,
        target,
        pretext: PretextData {
            train: ptrain,
            val: pval,
            num_classes: pretext_classes,
        },
    })
}
