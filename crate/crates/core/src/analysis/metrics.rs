use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::nn::{argmax, entropy, softmax_rows, HeadParams, MlpParams};

/// Features of one domain's samples with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainFeatures {
    pub domain_id: usize,
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl DomainFeatures {
    pub fn extract(f: &MlpParams, data: &Dataset) -> Result<Self> {
        Ok(Self {
            domain_id: data.domain_id,
            features: f.forward(&data.x)?,
            labels: data.y.clone(),
        })
    }
}

/// Per-dimension mean squared distance `(1/d) Σ (aᵢ − bᵢ)²`.
pub fn mse_distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b) / a.len() as f64
}

/// Mean feature per `(domain, class)` cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Centroids {
    pub cells: BTreeMap<(usize, usize), Vec<f64>>,
    pub counts: BTreeMap<(usize, usize), usize>,
}

impl Centroids {
    pub fn get(&self, domain: usize, class: usize) -> Option<&[f64]> {
        self.cells.get(&(domain, class)).map(Vec::as_slice)
    }

    pub fn classes_of(&self, domain: usize) -> Vec<usize> {
        self.cells.keys().filter(|(d, _)| *d == domain).map(|&(_, c)| c).collect()
    }
}

pub fn class_centroids(domains: &[DomainFeatures]) -> Centroids {
    let mut out = Centroids::default();
    for d in domains {
        for (r, &y) in d.labels.iter().enumerate() {
            let key = (d.domain_id, y);
            let row = d.features.row(r);
            let sum = out.cells.entry(key).or_insert_with(|| vec![0.0; row.len()]);
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            *out.counts.entry(key).or_insert(0) += 1;
        }
    }
    for (key, sum) in out.cells.iter_mut() {
        let n = out.counts[key] as f64;
        for s in sum.iter_mut() {
            *s /= n;
        }
    }
    out
}

/// Gap between one pair of domains over their shared classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub domain_a: usize,
    pub domain_b: usize,
    pub shared_classes: usize,
    pub gap: f64,
}

/// Unweighted mean of the centroid MSE distance over all `(class, pair)`
/// cells where both domains hold the class.
pub fn domain_gap(centroids: &Centroids, pairs: &[(usize, usize)]) -> Result<f64> {
    let mut total = 0.0;
    let mut cells = 0usize;
    for &(a, b) in pairs {
        for c in centroids.classes_of(a) {
            if let (Some(ca), Some(cb)) = (centroids.get(a, c), centroids.get(b, c)) {
                total += mse_distance(ca, cb);
                cells += 1;
            }
        }
    }
    if cells == 0 {
        return Err(Error::Undefined("no class shared by the requested domain pairs".into()));
    }
    Ok(total / cells as f64)
}

pub fn pair_gaps(centroids: &Centroids, pairs: &[(usize, usize)]) -> Vec<PairGap> {
    pairs
        .iter()
        .filter_map(|&(a, b)| {
            let shared = centroids
                .classes_of(a)
                .into_iter()
                .filter(|&c| centroids.get(b, c).is_some())
                .count();
            domain_gap(centroids, &[(a, b)]).ok().map(|gap| PairGap {
                domain_a: a,
                domain_b: b,
                shared_classes: shared,
                gap,
            })
        })
        .collect()
}

/// Per class, the mean MSE distance of each feature to its class centroid;
/// then the unweighted mean over classes.
pub fn intra_class_distance(domain: &DomainFeatures) -> Result<f64> {
    let centroids = class_centroids(std::slice::from_ref(domain));
    if centroids.cells.is_empty() {
        return Err(Error::Undefined(format!("domain {} has no samples", domain.domain_id)));
    }
    let mut per_class: BTreeMap<usize, f64> = BTreeMap::new();
    for (r, &y) in domain.labels.iter().enumerate() {
        let c = centroids.get(domain.domain_id, y).expect("centroid of a present class");
        *per_class.entry(y).or_insert(0.0) += mse_distance(domain.features.row(r), c);
    }
    let mut total = 0.0;
    for (y, sum) in &per_class {
        total += sum / centroids.counts[&(domain.domain_id, *y)] as f64;
    }
    Ok(total / per_class.len() as f64)
}

/// Mean over inputs of `‖f(x) − f0(x)‖²`.
pub fn feature_drift(f: &MlpParams, f0: &MlpParams, x: &Matrix) -> Result<f64> {
    if !f.same_shape(f0) {
        return Err(Error::shape("feature_drift needs matching architectures"));
    }
    if x.rows() == 0 {
        return Err(Error::Undefined("feature_drift on no inputs".into()));
    }
    let a = f.forward(x)?;
    let b = f0.forward(x)?;
    let mut total = 0.0;
    for (ra, rb) in a.iter_rows().zip(b.iter_rows()) {
        total += squared_distance(ra, rb);
    }
    Ok(total / x.rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub n: usize,
    pub mean_max_confidence: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    /// `None` when the population is empty.
    pub known: Option<PopulationStats>,
    pub unknown: Option<PopulationStats>,
}

/// Per-sample maximum softmax probability and entropy of `h(f(x))`.
pub fn confidence_and_entropy(f: &MlpParams, h: &HeadParams, x: &Matrix) -> Result<Vec<(f64, f64)>> {
    let p = softmax_rows(&h.forward(&f.forward(x)?)?)?;
    Ok(p.iter_rows().map(|row| (row[argmax(row)], entropy(row))).collect())
}

/// Mean max-confidence and entropy split by known (`y < C`) and unknown labels.
pub fn confidence_entropy_stats(f: &MlpParams, h: &HeadParams, target: &Dataset) -> Result<ConfidenceStats> {
    let c = h.num_classes();
    let per = confidence_and_entropy(f, h, &target.x)?;
    let mut acc = [(0usize, 0.0, 0.0); 2];
    for (&(conf, ent), &y) in per.iter().zip(&target.y) {
        let slot = &mut acc[usize::from(y >= c)];
        slot.0 += 1;
        slot.1 += conf;
        slot.2 += ent;
    }
    let stats = |(n, conf, ent): (usize, f64, f64)| {
        (n > 0).then(|| PopulationStats {
            n,
            mean_max_confidence: conf / n as f64,
            mean_entropy: ent / n as f64,
        })
    };
    Ok(ConfidenceStats {
        known: stats(acc[0]),
        unknown: stats(acc[1]),
    })
}

/// Mean over classes of the Euclidean norm of the `[W | b]` row difference.
pub fn head_euclidean_distance(a: &HeadParams, b: &HeadParams) -> Result<f64> {
    let d = a.row_distances(b)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub imp1: f64,
    pub imp2: f64,
}

/// `imp1 = (model/lp − 1)·100`, `imp2 = (trained-head-on-f0 / lp-head-on-f0 − 1)·100`.
pub fn improvement_ratios(
    model_acc: f64,
    lp_acc: f64,
    frozen_feat_trained_head: f64,
    frozen_feat_lp_head: f64,
) -> Result<Improvement> {
    if lp_acc == 0.0 || frozen_feat_lp_head == 0.0 {
        return Err(Error::Undefined("improvement ratio with a zero denominator".into()));
    }
    Ok(Improvement {
        imp1: (model_acc / lp_acc - 1.0) * 100.0,
        imp2: (frozen_feat_trained_head / frozen_feat_lp_head - 1.0) * 100.0,
    })
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("correlation needs at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    /// Values that fell outside `[lo, hi]` and were clamped into an end bin.
    pub clamped: usize,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (0..=self.counts.len()).map(|i| self.lo + w * i as f64).collect()
    }
}

/// Fixed-width bins over `[lo, hi]`; each bin is `[a, b)` except the last,
/// which is closed.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidConfig(format!("histogram with {bins} bins over [{lo}, {hi}]")));
    }
    let mut counts = vec![0usize; bins];
    let mut clamped = 0;
    for &v in values {
        if v.is_nan() {
            return Err(Error::NonFinite("histogram value".into()));
        }
        if v < lo || v > hi {
            clamped += 1;
        }
        let pos = ((v - lo) / (hi - lo) * bins as f64).floor();
        let i = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
        counts[i] += 1;
    }
    Ok(Histogram {
        lo,
        hi,
        counts,
        clamped,
    })
}

/// `s₀ = x₀`, `sₜ = α·sₜ₋₁ + (1 − α)·xₜ`.
pub fn ema(series: &[f64], factor: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut s = 0.0;
    for (i, &x) in series.iter().enumerate() {
        s = if i == 0 { x } else { factor * s + (1.0 - factor) * x };
        out.push(s);
    }
    out
}
