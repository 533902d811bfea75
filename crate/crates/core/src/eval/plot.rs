//! Minimal SVG output for score timelines and precision-recall curves.

use std::fmt::Write as _;

use crate::detect::ScoreSeries;
use crate::lob::Label;

const W: f64 = 800.0;
const H: f64 = 240.0;
const PAD: f64 = 30.0;

fn polyline(points: &[(f64, f64)], colour: &str) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    format!(r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#, s.trim_end())
}

/// Point scores over time, anomalous steps shaded, threshold dashed.
pub fn score_timeline_svg(series: &ScoreSeries, labels: &[Label]) -> String {
    let n = series.point_scores.len().max(2);
    let (lo, hi) = series
        .point_scores
        .iter()
        .chain(std::iter::once(&series.threshold))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    let step = (W - 2.0 * PAD) / (n - 1) as f64;
    for (i, l) in labels.iter().enumerate() {
        if l.is_anomaly() {
            let _ = write!(svg, r##"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{}" fill="#f4c7c3"/>"##, x(i), step.max(0.5), H - 2.0 * PAD);
        }
    }
    let pts: Vec<(f64, f64)> = series.point_scores.iter().enumerate().map(|(i, &v)| (x(i), y(v))).collect();
    svg.push_str(&polyline(&pts, "#1f4e79"));
    let ty = y(series.threshold);
    let _ = write!(svg, r##"<line x1="{PAD}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#b22222" stroke-dasharray="4 3"/>"##, W - PAD);
    svg.push_str("</svg>\n");
    svg
}

/// Precision against recall over all score cutoffs; `None` without
/// positives.
pub fn pr_curve_svg(scores: &[f64], labels: &[Label]) -> Option<String> {
    let mut items: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Ignore)
        .map(|(&s, l)| (s, l.is_anomaly()))
        .collect();
    let positives = items.iter().filter(|p| p.1).count();
    if positives == 0 {
        return None;
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let side = H;
    let x = |r: f64| PAD + (side - 2.0 * PAD) * r;
    let y = |p: f64| side - PAD - (side - 2.0 * PAD) * p;
    let mut pts = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < items.len() {
        let s = items[i].0;
        while i < items.len() && items[i].0 == s {
            tp += items[i].1 as usize;
            seen += 1;
            i += 1;
        }
        pts.push((x(tp as f64 / positives as f64), y(tp as f64 / seen as f64)));
    }
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}">"#);
    let _ = write!(
        svg,
        r##"<rect x="{PAD}" y="{PAD}" width="{0}" height="{0}" fill="none" stroke="#888"/>"##,
        side - 2.0 * PAD
    );
    svg.push_str(&polyline(&pts, "#1f4e79"));
    svg.push_str("</svg>\n");
    Some(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::PointScores;

    #[test]
    fn svg_documents_are_well_formed() {
        let series = ScoreSeries::new(0, vec![], PointScores { scores: vec![0.1, 0.5, 0.9], inherited: vec![false; 3] }, 0.4);
        let labels = [Label::Normal, Label::Anomaly, Label::Anomaly];
        let t = score_timeline_svg(&series, &labels);
        assert!(t.starts_with("<svg") && t.trim_end().ends_with("</svg>"));
        assert_eq!(t.matches("<rect").count(), 2);
        let pr = pr_curve_svg(&series.point_scores, &labels).unwrap();
        assert!(pr.contains("<polyline"));
        assert!(pr_curve_svg(&[0.1], &[Label::Normal]).is_none());
    }
}
