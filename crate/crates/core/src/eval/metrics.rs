use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    AllLevels,
    #[serde(rename = "levels_2_5")]
    Levels2To5,
}

impl Subset {
    pub fn tag(self) -> &'static str {
        match self {
            Subset::AllLevels => "all_levels",
            Subset::Levels2To5 => "levels_2_5",
        }
    }
}

fn scored(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, bool)>> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let out: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Ignore)
        .map(|(&s, l)| (s, l.is_anomaly()))
        .collect();
    if out.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Undefined("NaN score".into()));
    }
    Ok(out)
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half, from average ranks.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let mut items = scored(scores, labels)?;
    let pos = items.iter().filter(|p| p.1).count();
    let neg = items.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(format!("AUROC needs both classes ({pos} positives, {neg} negatives)")));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * items[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: each positive contributes the precision of the cutoff
/// that first includes its whole tie group.
pub fn auc_pr(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let mut items = scored(scores, labels)?;
    let pos = items.iter().filter(|p| p.1).count();
    if pos == 0 {
        return Err(Error::Undefined("no positives".into()));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let mut group_pos = 0;
        while j < items.len() && items[j].0 == items[i].0 {
            group_pos += items[j].1 as usize;
            j += 1;
        }
        tp += group_pos;
        seen += j - i;
        ap += group_pos as f64 * tp as f64 / seen as f64;
        i = j;
    }
    Ok(ap / pos as f64)
}

/// `(1+β²)·P·R / (β²·P + R)`, 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 { 0.0 } else { (1.0 + b2) * precision * recall / den }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub subset: Subset,
    pub auc_pr: f64,
    pub auroc: f64,
    pub f4: f64,
    pub precision: f64,
    pub recall: f64,
    pub positives: usize,
    pub threshold: f64,
}

/// All five metrics for point scores against labels; decisions are
/// `score > threshold`. Ignore-labelled steps are skipped.
pub fn evaluate(scores: &[f64], labels: &[Label], threshold: f64, subset: Subset) -> Result<MetricReport> {
    let items = scored(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &(s, y) in &items {
        match (s > threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok(MetricReport {
        subset,
        auc_pr: auc_pr(scores, labels)?,
        auroc: auroc(scores, labels)?,
        f4: f_beta(precision, recall, 4.0),
        precision,
        recall,
        positives: tp + fn_,
        threshold,
    })
}
