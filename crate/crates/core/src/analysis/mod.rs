//! Feature-space, logit-space and head-space diagnostics, rank correlation,
//! histograms and loss-curve export.

mod curves;
mod metrics;
mod report;

pub use curves::{curves_from_record, histograms_svg, loss_curves_csv, loss_curves_svg, LossCurve, EMA_FACTOR};
pub use metrics::{
    average_ranks, class_centroids, confidence_and_entropy, confidence_entropy_stats, domain_gap, ema,
    feature_drift, head_euclidean_distance, histogram, improvement_ratios, intra_class_distance, mse_distance,
    pair_gaps, pearson, spearman_rho, Centroids, ConfidenceStats, DomainFeatures, Histogram, Improvement, PairGap,
    PopulationStats,
};
pub use report::{
    analyze, compare_reports, comparison_csv, AnalysisReport, ComparisonRow, ConfidenceHistograms, DomainGapReport,
    DomainScalar, HeadAccuracies, HISTOGRAM_BINS,
};
