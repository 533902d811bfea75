use std::ops::Range;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::window::WindowBatch;
use crate::error::{Error, Result};
use crate::lob::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Training set holds normal windows only.
    #[serde(alias = "original")]
    Traditional,
    /// A small share of labelled anomalous windows stays in training.
    Proposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainAnomalyPolicy {
    Exclude,
    Include,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    pub train_anomaly_policy: TrainAnomalyPolicy,
}

impl SplitSpec {
    pub fn by_ratio(n: usize, ratios: [f64; 3], mode: SplitMode) -> Result<Self> {
        let total: f64 = ratios.iter().sum();
        if ratios.iter().any(|&r| r <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must be positive and sum to 1"));
        }
        let a = (ratios[0] * n as f64).floor() as usize;
        let b = ((ratios[0] + ratios[1]) * n as f64).floor() as usize;
        let spec = SplitSpec {
            mode,
            train: 0..a,
            val: a..b,
            test: b..n,
            train_anomaly_policy: match mode {
                SplitMode::Traditional => TrainAnomalyPolicy::Exclude,
                SplitMode::Proposed => TrainAnomalyPolicy::Include,
            },
        };
        spec.validate(n)?;
        Ok(spec)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::config("split ranges must be non-empty"));
        }
        if !(self.train.end <= self.val.start && self.val.end <= self.test.start && self.test.end <= n) {
            return Err(Error::config("split ranges must be disjoint, time-ordered and inside the series"));
        }
        if self.mode == SplitMode::Traditional && self.train_anomaly_policy != TrainAnomalyPolicy::Exclude {
            return Err(Error::config("traditional split mode requires excluding training anomalies"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Window length T.
    pub length: usize,
    /// Anchor stride on validation and test ranges.
    pub stride: usize,
    /// Anchor stride on the training range.
    pub train_stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { length: 32, stride: 1, train_stride: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
}

/// Windows per split; none straddles a boundary. Training windows with an
/// anomalous step are dropped under [`TrainAnomalyPolicy::Exclude`].
pub fn split(rows: Arc<Array2<f64>>, labels: &[Label], spec: &SplitSpec, window: &WindowConfig) -> Result<SplitWindows> {
    spec.validate(rows.nrows())?;
    let t = window.length;
    let mut train = WindowBatch::over_range(rows.clone(), labels, spec.train.clone(), t, window.train_stride)?;
    if spec.train_anomaly_policy == TrainAnomalyPolicy::Exclude {
        train = train.select(&train.normal_indices());
    } else if train.positives() == 0 {
        log::warn!("proposed split has no anomalous training windows; the contrastive term will be inert");
    }
    let val = WindowBatch::over_range(rows.clone(), labels, spec.val.clone(), t, window.stride)?;
    let test = WindowBatch::over_range(rows, labels, spec.test.clone(), t, window.stride)?;
    Ok(SplitWindows { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_with(n: usize, pos: &[usize]) -> Vec<Label> {
        let mut l = vec![Label::Normal; n];
        for &p in pos {
            l[p] = Label::Anomaly;
        }
        l
    }

    #[test]
    fn traditional_has_no_training_positives() {
        let n = 200;
        let labels = labels_with(n, &[20, 21, 22, 90, 150]);
        let rows = Arc::new(Array2::zeros((n, 2)));
        let spec = SplitSpec::by_ratio(n, [0.6, 0.2, 0.2], SplitMode::Traditional).unwrap();
        let w = split(rows, &labels, &spec, &WindowConfig { length: 8, stride: 1, train_stride: 1 }).unwrap();
        assert_eq!(w.train.positives(), 0);
        assert!(w.val.positives() > 0);
    }

    #[test]
    fn proposed_keeps_all_covering_windows() {
        let n = 300;
        let labels = labels_with(n, &[30, 31, 32, 33, 100, 175]);
        let rows = Arc::new(Array2::zeros((n, 2)));
        let spec = SplitSpec::by_ratio(n, [0.6, 0.2, 0.2], SplitMode::Proposed).unwrap();
        let t = 10;
        let w = split(rows, &labels, &spec, &WindowConfig { length: t, stride: 1, train_stride: 1 }).unwrap();
        let oracle = (spec.train.start..=spec.train.end - t)
            .filter(|&a| (a..a + t).any(|s| labels[s].is_anomaly()))
            .count();
        assert_eq!(w.train.positives(), oracle);
    }

    #[test]
    fn boundary_windows_excluded() {
        let n = 100;
        let rows = Arc::new(Array2::zeros((n, 1)));
        let spec = SplitSpec::by_ratio(n, [0.6, 0.2, 0.2], SplitMode::Proposed).unwrap();
        let w = split(rows, &vec![Label::Normal; n], &spec, &WindowConfig { length: 5, stride: 1, train_stride: 1 }).unwrap();
        assert!(w.train.anchors.iter().all(|&a| a + 5 <= spec.train.end));
        assert!(w.val.anchors.iter().all(|&a| a >= spec.val.start && a + 5 <= spec.val.end));
        assert!(!w.train.anchors.contains(&57) && !w.val.anchors.contains(&57));
        let max_train = w.train.anchors.last().unwrap() + 4;
        assert!(max_train < w.val.anchors[0] && w.val.anchors.last().unwrap() + 4 < w.test.anchors[0]);
    }

    #[test]
    fn invalid_specs() {
        assert!(SplitSpec::by_ratio(100, [0.5, 0.5, 0.0], SplitMode::Proposed).is_err());
        let mut spec = SplitSpec::by_ratio(100, [0.6, 0.2, 0.2], SplitMode::Traditional).unwrap();
        spec.train_anomaly_policy = TrainAnomalyPolicy::Include;
        assert!(spec.validate(100).is_err());
        let mut spec = SplitSpec::by_ratio(100, [0.6, 0.2, 0.2], SplitMode::Proposed).unwrap();
        spec.val = 50..80;
        assert!(spec.validate(100).is_err());
    }
}
