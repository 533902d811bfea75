use std::ops::Range;
use std::sync::Arc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::manual::FeatureFrame;
use super::normalize::NormStats;
use crate::error::{Error, Result};
use crate::lob::Label;

/// Which per-step columns feed the representation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Manual features only.
    NoLob,
    /// Raw LOB block concatenated with manual features.
    RawLob,
    /// Frozen LOB embeddings fused with manual features.
    EmbeddedLob,
}

impl FeatureFrame {
    /// n × d per-step input rows for the row-backed input modes.
    pub fn input_rows(&self, mode: InputMode) -> Result<Array2<f64>> {
        match mode {
            InputMode::NoLob => Ok(self.manual.clone()),
            InputMode::RawLob => Ok(concatenate(Axis(1), &[self.lob.view(), self.manual.view()])
                .map_err(|e| Error::shape(e.to_string()))?),
            InputMode::EmbeddedLob => Err(Error::shape("embedded LOB input is built by the cascade, not from rows")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum WindowData {
    /// Windows are row slices `slot..slot+T` of a shared per-step matrix.
    Rows(Arc<Array2<f64>>),
    /// Windows are stored individually; `slot` indexes the list.
    Owned(Arc<Vec<Array2<f64>>>),
}

/// Sliding windows with per-window labels.
///
/// `anchors[i]` is the first step covered by window `i`; `labels[i]` is 1 iff
/// any covered step is an anomaly; `ignore[i]` marks windows touching an
/// ignore-labelled step.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub length: usize,
    pub dim: usize,
    pub anchors: Vec<usize>,
    pub labels: Vec<u8>,
    pub ignore: Vec<bool>,
    slots: Vec<usize>,
    data: WindowData,
    pub stats: Option<NormStats>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        let slot = self.slots[i];
        match &self.data {
            WindowData::Rows(rows) => rows.slice(s![slot..slot + self.length, ..]),
            WindowData::Owned(items) => items[slot].view(),
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Sub-batch with the given window indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> WindowBatch {
        WindowBatch {
            length: self.length,
            dim: self.dim,
            anchors: idx.iter().map(|&i| self.anchors[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ignore: idx.iter().map(|&i| self.ignore[i]).collect(),
            slots: idx.iter().map(|&i| self.slots[i]).collect(),
            data: self.data.clone(),
            stats: self.stats.clone(),
        }
    }

    pub fn normal_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == 0).collect()
    }

    /// Same anchors and labels, new window contents (one matrix per window).
    pub fn with_windows(&self, windows: Vec<Array2<f64>>) -> Result<WindowBatch> {
        if windows.len() != self.len() {
            return Err(Error::shape(format!("{} windows for {} anchors", windows.len(), self.len())));
        }
        let dim = windows.first().map_or(self.dim, |w| w.ncols());
        if windows.iter().any(|w| w.nrows() != self.length || w.ncols() != dim) {
            return Err(Error::shape("replacement windows have inconsistent shapes"));
        }
        Ok(WindowBatch {
            length: self.length,
            dim,
            anchors: self.anchors.clone(),
            labels: self.labels.clone(),
            ignore: self.ignore.clone(),
            slots: (0..windows.len()).collect(),
            data: WindowData::Owned(Arc::new(windows)),
            stats: self.stats.clone(),
        })
    }

    /// Free-standing windows with explicit labels; anchors are `0..n`.
    pub fn from_windows(windows: Vec<Array2<f64>>, labels: Vec<u8>) -> Result<WindowBatch> {
        if windows.len() != labels.len() || windows.is_empty() {
            return Err(Error::shape("need one label per window and at least one window"));
        }
        let (length, dim) = windows[0].dim();
        if windows.iter().any(|w| w.dim() != (length, dim)) {
            return Err(Error::shape("windows have inconsistent shapes"));
        }
        let n = windows.len();
        Ok(WindowBatch {
            length,
            dim,
            anchors: (0..n).collect(),
            labels,
            ignore: vec![false; n],
            slots: (0..n).collect(),
            data: WindowData::Owned(Arc::new(windows)),
            stats: None,
        })
    }

    /// Windows over `range` of the per-step rows at `start, start+stride, …`.
    pub fn over_range(rows: Arc<Array2<f64>>, labels: &[Label], range: Range<usize>, length: usize, stride: usize) -> Result<WindowBatch> {
        if length < 2 {
            return Err(Error::config("window length T must be >= 2"));
        }
        if stride < 1 {
            return Err(Error::config("window stride must be >= 1"));
        }
        if labels.len() != rows.nrows() || range.end > rows.nrows() {
            return Err(Error::shape("labels/rows/range disagree"));
        }
        if length > range.len() {
            return Err(Error::shape(format!("window length {length} exceeds series length {}", range.len())));
        }
        let anchors: Vec<usize> = (range.start..=range.end - length).step_by(stride).collect();
        let labels_w = anchors
            .iter()
            .map(|&a| labels[a..a + length].iter().any(|l| l.is_anomaly()) as u8)
            .collect();
        let ignore = anchors.iter().map(|&a| labels[a..a + length].contains(&Label::Ignore)).collect();
        Ok(WindowBatch {
            length,
            dim: rows.ncols(),
            slots: anchors.clone(),
            anchors,
            labels: labels_w,
            ignore,
            data: WindowData::Rows(rows),
            stats: None,
        })
    }
}

/// Windows over the whole series at anchors `0, stride, 2·stride, …`.
pub fn make_windows(rows: Arc<Array2<f64>>, labels: &[Label], length: usize, stride: usize) -> Result<WindowBatch> {
    let n = rows.nrows();
    WindowBatch::over_range(rows, labels, 0..n, length, stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Arc<Array2<f64>> {
        Arc::new(Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64))
    }

    #[test]
    fn window_count() {
        let w = make_windows(rows(10), &[Label::Normal; 10], 5, 1).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.window(5).row(0).to_vec(), vec![15.0, 16.0, 17.0]);
        assert!(w.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn single_anomaly_coverage() {
        let mut labels = vec![Label::Normal; 10];
        labels[7] = Label::Anomaly;
        let w = make_windows(rows(10), &labels, 5, 1).unwrap();
        let pos: Vec<usize> = (0..w.len()).filter(|&i| w.labels[i] == 1).map(|i| w.anchors[i]).collect();
        assert_eq!(pos, vec![3, 4, 5]);
        // anchors 6 and 7 would need steps past the end of the series
        let longer = make_windows(rows(12), &[labels.clone(), vec![Label::Normal; 2]].concat(), 5, 1).unwrap();
        let pos: Vec<usize> = (0..longer.len()).filter(|&i| longer.labels[i] == 1).map(|i| longer.anchors[i]).collect();
        assert_eq!(pos, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn bad_parameters() {
        assert!(make_windows(rows(4), &[Label::Normal; 4], 5, 1).is_err());
        assert!(make_windows(rows(10), &[Label::Normal; 10], 1, 1).is_err());
        assert!(make_windows(rows(10), &[Label::Normal; 10], 3, 0).is_err());
    }

    #[test]
    fn stride_spacing() {
        let w = make_windows(rows(20), &[Label::Normal; 20], 4, 3).unwrap();
        assert_eq!(w.anchors, vec![0, 3, 6, 9, 12, 15]);
    }
}
