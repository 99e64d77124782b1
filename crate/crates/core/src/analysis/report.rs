use serde::{Deserialize, Serialize};

use crate::analysis::metrics::{
    class_centroids, confidence_and_entropy, confidence_entropy_stats, domain_gap, feature_drift,
    head_euclidean_distance, histogram, improvement_ratios, intra_class_distance, pair_gaps, ConfidenceStats,
    DomainFeatures, Histogram, Improvement, PairGap,
};
use crate::data::BenchmarkBundle;
use crate::error::Result;
use crate::eval::accuracy;
use crate::nn::ModelState;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGapReport {
    /// Centroid MSE distance, target vs each source, shared classes only.
    pub target_vs_sources: f64,
    pub source_pairs: f64,
    pub per_pair: Vec<PairGap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScalar {
    pub domain_id: usize,
    pub role: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadAccuracies {
    /// `h(f(·))` on target known classes.
    pub model: f64,
    /// `h_lp(f0(·))`.
    pub linear_probe: f64,
    /// `h(f0(·))`.
    pub trained_head_on_f0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistograms {
    pub known: Option<Histogram>,
    pub unknown: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub domain_gap: DomainGapReport,
    /// Per-dimension MSE to class centroids, per domain (target uses all of
    /// its classes, open ones included).
    pub intra_class: Vec<DomainScalar>,
    /// Mean squared L2 (summed over dimensions) between `f` and `f0` features.
    pub feature_drift: Vec<DomainScalar>,
    pub confidence: ConfidenceStats,
    /// Distance of the head from `h_lp`; `None` without a snapshot.
    pub head_distance: Option<f64>,
    pub accuracies: Option<HeadAccuracies>,
    pub improvement: Option<Improvement>,
    pub histograms: ConfidenceHistograms,
}

impl AnalysisReport {
    fn lookup(list: &[DomainScalar], role: &str) -> f64 {
        let v: Vec<f64> = list.iter().filter(|d| d.role == role).map(|d| d.value).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn intra_class_target(&self) -> f64 {
        Self::lookup(&self.intra_class, "target")
    }

    pub fn intra_class_sources(&self) -> f64 {
        Self::lookup(&self.intra_class, "source")
    }

    pub fn feature_drift_target(&self) -> f64 {
        Self::lookup(&self.feature_drift, "target")
    }

    pub fn feature_drift_sources(&self) -> f64 {
        Self::lookup(&self.feature_drift, "source")
    }

    pub fn histograms_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,known,unknown\n");
        let reference = self.histograms.known.as_ref().or(self.histograms.unknown.as_ref());
        if let Some(r) = reference {
            let edges = r.bin_edges();
            for i in 0..r.counts.len() {
                let k = self.histograms.known.as_ref().map_or(0, |h| h.counts[i]);
                let u = self.histograms.unknown.as_ref().map_or(0, |h| h.counts[i]);
                s.push_str(&format!("{},{},{k},{u}\n", edges[i], edges[i + 1]));
            }
        }
        s
    }
}

/// Computes every diagnostic for the live model against the benchmark.
pub fn analyze(state: &ModelState, bundle: &BenchmarkBundle) -> Result<AnalysisReport> {
    let target_id = bundle.target.domain_id;
    let target_known = bundle.target_known();
    let mut domains = Vec::new();
    for s in &bundle.sources {
        domains.push(DomainFeatures::extract(&state.f, &s.train)?);
    }
    domains.push(DomainFeatures::extract(&state.f, &target_known)?);
    let centroids = class_centroids(&domains);
    let source_ids: Vec<usize> = bundle.sources.iter().map(|s| s.domain_id).collect();
    let tvs: Vec<(usize, usize)> = source_ids.iter().map(|&s| (target_id, s)).collect();
    let mut spairs = Vec::new();
    for (i, &a) in source_ids.iter().enumerate() {
        for &b in &source_ids[i + 1..] {
            spairs.push((a, b));
        }
    }
    let mut all_pairs = spairs.clone();
    all_pairs.extend(source_ids.iter().map(|&s| (s, target_id)));
    let gap = DomainGapReport {
        target_vs_sources: domain_gap(&centroids, &tvs)?,
        source_pairs: domain_gap(&centroids, &spairs)?,
        per_pair: pair_gaps(&centroids, &all_pairs),
    };

    let mut intra = Vec::new();
    let mut drift = Vec::new();
    for (s, feats) in bundle.sources.iter().zip(&domains) {
        intra.push(DomainScalar {
            domain_id: s.domain_id,
            role: "source".into(),
            value: intra_class_distance(feats)?,
        });
        drift.push(DomainScalar {
            domain_id: s.domain_id,
            role: "source".into(),
            value: feature_drift(&state.f, state.f0(), &s.train.x)?,
        });
    }
    intra.push(DomainScalar {
        domain_id: target_id,
        role: "target".into(),
        value: intra_class_distance(&DomainFeatures::extract(&state.f, &bundle.target)?)?,
    });
    drift.push(DomainScalar {
        domain_id: target_id,
        role: "target".into(),
        value: feature_drift(&state.f, state.f0(), &bundle.target.x)?,
    });

    let confidence = confidence_entropy_stats(&state.f, &state.h, &bundle.target)?;
    let c = state.num_classes();
    let per = confidence_and_entropy(&state.f, &state.h, &bundle.target.x)?;
    let conf_of = |open: bool| -> Vec<f64> {
        per.iter()
            .zip(&bundle.target.y)
            .filter(|(_, &y)| (y >= c) == open)
            .map(|(&(conf, _), _)| conf)
            .collect()
    };
    let hist = |v: Vec<f64>| -> Result<Option<Histogram>> {
        if v.is_empty() {
            Ok(None)
        } else {
            histogram(&v, HISTOGRAM_BINS, (0.0, 1.0)).map(Some)
        }
    };
    let histograms = ConfidenceHistograms {
        known: hist(conf_of(false))?,
        unknown: hist(conf_of(true))?,
    };

    let (head_distance, accuracies, improvement) = match (state.h_lp(), target_known.is_empty()) {
        (Some(h_lp), false) => {
            let acc = HeadAccuracies {
                model: accuracy(&state.f, &state.h, &target_known)?,
                linear_probe: accuracy(state.f0(), h_lp, &target_known)?,
                trained_head_on_f0: accuracy(state.f0(), &state.h, &target_known)?,
            };
            let imp = improvement_ratios(acc.model, acc.linear_probe, acc.trained_head_on_f0, acc.linear_probe).ok();
            (Some(head_euclidean_distance(&state.h, h_lp)?), Some(acc), imp)
        }
        (Some(h_lp), true) => (Some(head_euclidean_distance(&state.h, h_lp)?), None, None),
        (None, _) => (None, None, None),
    };

    Ok(AnalysisReport {
        domain_gap: gap,
        intra_class: intra,
        feature_drift: drift,
        confidence,
        head_distance,
        accuracies,
        improvement,
        histograms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

/// Side-by-side table of the headline diagnostics of two reports.
pub fn compare_reports(a: &AnalysisReport, b: &AnalysisReport) -> Vec<ComparisonRow> {
    type Getter = fn(&AnalysisReport) -> Option<f64>;
    let rows: [(&str, Getter); 14] = [
        ("domain_gap_target_vs_sources", |r| Some(r.domain_gap.target_vs_sources)),
        ("domain_gap_source_pairs", |r| Some(r.domain_gap.source_pairs)),
        ("intra_class_sources", |r| Some(r.intra_class_sources())),
        ("intra_class_target", |r| Some(r.intra_class_target())),
        ("feature_drift_sources", |r| Some(r.feature_drift_sources())),
        ("feature_drift_target", |r| Some(r.feature_drift_target())),
        ("max_confidence_known", |r| r.confidence.known.map(|s| s.mean_max_confidence)),
        ("max_confidence_unknown", |r| r.confidence.unknown.map(|s| s.mean_max_confidence)),
        ("entropy_known", |r| r.confidence.known.map(|s| s.mean_entropy)),
        ("entropy_unknown", |r| r.confidence.unknown.map(|s| s.mean_entropy)),
        ("head_distance", |r| r.head_distance),
        ("acc_known", |r| r.accuracies.as_ref().map(|a| a.model)),
        ("imp1", |r| r.improvement.map(|i| i.imp1)),
        ("imp2", |r| r.improvement.map(|i| i.imp2)),
    ];
    rows.iter()
        .map(|(name, get)| ComparisonRow {
            metric: name.to_string(),
            a: get(a),
            b: get(b),
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow], label_a: &str, label_b: &str) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut s = format!("metric,{label_a},{label_b}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.metric, opt(r.a), opt(r.b)));
    }
    s
}
