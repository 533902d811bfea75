use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointScores {
    pub scores: Vec<f64>,
    /// Steps covered by no window; their score is copied from the nearest
    /// covered step.
    pub inherited: Vec<bool>,
}

/// Point scores for `n_steps` steps from windows anchored at `0, stride, …`.
pub fn aggregate_to_points(window_scores: &[f64], length: usize, stride: usize, n_steps: usize) -> Result<PointScores> {
    let anchors: Vec<usize> = (0..window_scores.len()).map(|i| i * stride).collect();
    aggregate_anchored(window_scores, &anchors, length, 0..n_steps, Aggregation::Mean)
}

/// Point scores over `range` from windows with explicit anchors.
pub fn aggregate_anchored(
    window_scores: &[f64],
    anchors: &[usize],
    length: usize,
    range: Range<usize>,
    mode: Aggregation,
) -> Result<PointScores> {
    if window_scores.len() != anchors.len() {
        return Err(Error::shape("one score per window anchor"));
    }
    let n = range.len();
    let mut acc = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&s, &a) in window_scores.iter().zip(anchors) {
        let lo = a.max(range.start);
        let hi = (a + length).min(range.end);
        for t in lo..hi {
            let k = t - range.start;
            match mode {
                Aggregation::Mean => acc[k] += s,
                Aggregation::Max => acc[k] = if count[k] == 0 { s } else { acc[k].max(s) },
            }
            count[k] += 1;
        }
    }
    if n > 0 && count.iter().all(|&c| c == 0) {
        return Err(Error::shape("no window covers the requested range"));
    }
    let mut scores: Vec<f64> = acc
        .iter()
        .zip(&count)
        .map(|(&a, &c)| match (mode, c) {
            (_, 0) => f64::NAN,
            (Aggregation::Mean, c) => a / c as f64,
            (Aggregation::Max, _) => a,
        })
        .collect();
    let inherited: Vec<bool> = count.iter().map(|&c| c == 0).collect();
    if inherited.iter().any(|&b| b) {
        let covered: Vec<usize> = (0..n).filter(|&k| !inherited[k]).collect();
        for k in (0..n).filter(|&k| inherited[k]) {
            let pos = covered.partition_point(|&c| c < k);
            let before = pos.checked_sub(1).map(|p| covered[p]);
            let after = covered.get(pos).copied();
            let src = match (before, after) {
                (Some(b), Some(a)) => {
                    if k - b <= a - k {
                        b
                    } else {
                        a
                    }
                }
                (Some(b), None) => b,
                (None, Some(a)) => a,
                (None, None) => unreachable!("at least one step is covered"),
            };
            scores[k] = scores[src];
        }
    }
    Ok(PointScores { scores, inherited })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f4: f64,
    /// Fewer than two distinct scores, or no positives to aim at.
    pub degenerate: bool,
}

fn f4_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let num = 17.0 * tp as f64;
    let den = num + 16.0 * fn_ as f64 + fp as f64;
    if den == 0.0 { 0.0 } else { num / den }
}

/// Threshold maximizing F4 on labelled scores, scanned over midpoints
/// between consecutive distinct scores. Decisions are `score > threshold`;
/// ties keep the lowest threshold. Ignore-labelled steps are skipped.
pub fn pick_threshold(scores: &[f64], labels: &[Label]) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::shape("one label per score"));
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Ignore)
        .map(|(&s, l)| (s, l.is_anomaly()))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Undefined("no scored steps to pick a threshold from".into()));
    }
    if pairs.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Undefined("non-finite score".into()));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = pairs.iter().filter(|p| p.1).count();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<ThresholdChoice> = None;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let Some(&(next, _)) = pairs.get(i) else { break };
        // Flagging every score >= s corresponds to the midpoint below s.
        let threshold = (s + next) / 2.0;
        let f4 = f4_from_counts(tp, fp, positives - tp);
        if best.is_none_or(|b| f4 >= b.f4) {
            best = Some(ThresholdChoice { threshold, f4, degenerate: false });
        }
    }
    Ok(match best {
        Some(mut b) => {
            b.degenerate = positives == 0;
            b
        }
        None => ThresholdChoice { threshold: pairs[0].0, f4: 0.0, degenerate: true },
    })
}
