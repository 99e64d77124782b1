use std::fmt::Write as _;

use crate::analysis::metrics::{ema, Histogram};
use crate::train::RunRecord;

pub const EMA_FACTOR: f64 = 0.9;

/// One per-epoch loss series.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub variant: String,
    pub domain_id: usize,
    pub values: Vec<f64>,
}

/// Per-source-domain training `L_lp-ft` curves of a run.
pub fn curves_from_record(record: &RunRecord, domain_ids: &[usize]) -> Vec<LossCurve> {
    domain_ids
        .iter()
        .enumerate()
        .map(|(i, &d)| LossCurve {
            variant: record.variant.name().to_string(),
            domain_id: d,
            values: record.epochs.iter().map(|e| e.domain_lpft[i]).collect(),
        })
        .collect()
}

/// `variant,domain_id,epoch,raw,ema` with one row per epoch, domain and variant.
pub fn loss_curves_csv(curves: &[LossCurve]) -> String {
    let mut s = String::from("variant,domain_id,epoch,raw,ema\n");
    for c in curves {
        for (i, (raw, sm)) in c.values.iter().zip(ema(&c.values, EMA_FACTOR)).enumerate() {
            let _ = writeln!(s, "{},{},{},{raw},{sm}", c.variant, c.domain_id, i + 1);
        }
    }
    s
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Static line chart of the EMA-smoothed curves (raw values drawn faintly).
pub fn loss_curves_svg(curves: &[LossCurve]) -> String {
    let (w, h, margin) = (720.0, 420.0, 56.0);
    let max_len = curves.iter().map(|c| c.values.len()).max().unwrap_or(0).max(2);
    let all = curves.iter().flat_map(|c| c.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let px = |i: usize| margin + (w - 2.0 * margin) * i as f64 / (max_len - 1) as f64;
    let py = |v: f64| h - margin - (h - 2.0 * margin) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">training L_lp-ft</text>"#,
        w / 2.0,
        h - 16.0,
        h / 2.0,
        h / 2.0
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            margin - 4.0,
            py(v) + 4.0
        );
    }
    for (ci, c) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let smooth = ema(&c.values, EMA_FACTOR);
        for (series, opacity, width) in [(&c.values, 0.25, 1.0), (&smooth, 1.0, 2.0)] {
            let pts: Vec<String> = series
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-opacity="{opacity}" stroke-width="{width}" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = margin + 14.0 * ci as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{} / domain {}</text>"#,
            w - margin - 150.0,
            ly - 9.0,
            w - margin - 136.0,
            ly,
            c.variant,
            c.domain_id
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Overlaid bar chart of normalized histograms sharing one range, e.g. the
/// known and unknown max-confidence distributions.
pub fn histograms_svg(series: &[(&str, &Histogram)], x_label: &str) -> String {
    let (w, h, margin) = (720.0, 420.0, 56.0);
    let bins = series.iter().map(|(_, hist)| hist.counts.len()).max().unwrap_or(1).max(1);
    let (lo, hi) = series.first().map_or((0.0, 1.0), |(_, hist)| (hist.lo, hist.hi));
    let freq = |hist: &Histogram| -> Vec<f64> {
        let total: usize = hist.counts.iter().sum();
        hist.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    };
    let top = series
        .iter()
        .flat_map(|(_, hist)| freq(hist))
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let bin_w = (w - 2.0 * margin) / bins as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text><text x="{}" y="{}" text-anchor="start">{lo}</text><text x="{}" y="{}" text-anchor="end">{hi}</text>"#,
        w / 2.0,
        h - 16.0,
        margin,
        h - margin + 14.0,
        w - margin,
        h - margin + 14.0
    );
    for (si, (name, hist)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (b, f) in freq(hist).into_iter().enumerate() {
            let bh = (h - 2.0 * margin) * f / top;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                margin + bin_w * b as f64,
                h - margin - bh,
                bin_w,
                bh
            );
        }
        let ly = margin + 14.0 * si as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{name}</text>"#,
            w - margin - 150.0,
            ly - 9.0,
            w - margin - 136.0,
            ly
        );
    }
    s.push_str("</svg>\n");
    s
}
