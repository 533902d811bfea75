//! Unsupervised detectors over latent vectors, point-wise score aggregation
//! and threshold selection.

mod iforest;
mod ocsvm;
mod points;

pub use iforest::{IsoForestModel, IsoTree, Node, average_path, fit_iforest};
pub use ocsvm::{OcSvmModel, SmoOptions, default_gamma, fit_ocsvm, solve_dual};
pub use points::{Aggregation, PointScores, ThresholdChoice, aggregate_anchored, aggregate_to_points, pick_threshold};

use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::Label;
use crate::par::{Execution, map_range};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    OcSvm,
    IsolationForest,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::OcSvm => "ocsvm",
            DetectorKind::IsolationForest => "iforest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub nu: f64,
    /// RBF width; `None` uses `1 / (F · var)` of the training latents.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Larger training sets are subsampled before the SVM fit.
    pub max_fit_samples: usize,
    pub trees: usize,
    pub subsample: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            nu: 0.05,
            gamma: None,
            tolerance: 1e-4,
            max_iterations: 1_000_000,
            max_fit_samples: 2000,
            trees: 100,
            subsample: 256,
            aggregation: Aggregation::Mean,
            seed: 23,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    OcSvm(OcSvmModel),
    IsolationForest(IsoForestModel),
}

/// Fits a detector on normal latents. Any positive label is refused.
pub fn fit_detector(kind: DetectorKind, latents: &Array2<f64>, labels: &[u8], config: &DetectorConfig, exec: Execution) -> Result<Detector> {
    if labels.len() != latents.nrows() {
        return Err(Error::shape("one label per latent"));
    }
    if let Some(i) = labels.iter().position(|&l| l != 0) {
        return Err(Error::PositiveInFit(i));
    }
    match kind {
        DetectorKind::OcSvm => {
            let n = latents.nrows();
            let x = if n > config.max_fit_samples {
                let mut r = rng::derived(config.seed, "ocsvm-fit", 0);
                let mut idx = rand::seq::index::sample(&mut r, n, config.max_fit_samples).into_vec();
                idx.sort_unstable();
                latents.select(Axis(0), &idx)
            } else {
                latents.clone()
            };
            let gamma = config.gamma.unwrap_or_else(|| default_gamma(x.view()));
            let opts = SmoOptions { tolerance: config.tolerance, max_iterations: config.max_iterations };
            Ok(Detector::OcSvm(fit_ocsvm(x.view(), config.nu, gamma, opts)?))
        }
        DetectorKind::IsolationForest => Ok(Detector::IsolationForest(fit_iforest(
            latents.view(),
            config.trees,
            config.subsample,
            config.seed,
            exec,
        )?)),
    }
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::OcSvm(_) => DetectorKind::OcSvm,
            Detector::IsolationForest(_) => DetectorKind::IsolationForest,
        }
    }

    /// Anomaly score for one latent; higher is more anomalous.
    pub fn score(&self, latent: ndarray::ArrayView1<f64>) -> f64 {
        match self {
            Detector::OcSvm(m) => m.score(latent),
            Detector::IsolationForest(m) => m.score(latent),
        }
    }

    pub fn to_writer<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(input: R) -> Result<Detector> {
        Ok(serde_json::from_reader(input)?)
    }
}

pub fn score_windows(detector: &Detector, latents: &Array2<f64>, exec: Execution) -> Vec<f64> {
    map_range(exec, latents.nrows(), |i| detector.score(latents.row(i)))
}

/// Scores of one evaluated range with their decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub start: usize,
    pub window_scores: Vec<f64>,
    pub point_scores: Vec<f64>,
    pub inherited: Vec<bool>,
    pub threshold: f64,
    pub decisions: Vec<u8>,
}

impl ScoreSeries {
    pub fn new(start: usize, window_scores: Vec<f64>, points: PointScores, threshold: f64) -> Self {
        let decisions = points.scores.iter().map(|&s| (s > threshold) as u8).collect();
        ScoreSeries { start, window_scores, point_scores: points.scores, inherited: points.inherited, threshold, decisions }
    }

    /// `step,point_score,decision,label` with absolute step indices.
    pub fn write_csv<W: Write>(&self, labels: &[Label], mut out: W) -> Result<()> {
        if labels.len() != self.point_scores.len() {
            return Err(Error::shape("one label per point score"));
        }
        writeln!(out, "step,point_score,decision,label")?;
        for (k, ((s, d), l)) in self.point_scores.iter().zip(&self.decisions).zip(labels).enumerate() {
            writeln!(out, "{},{},{},{}", self.start + k, s, d, l.code())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn latents(n: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_simple_fn((n, 3), || StandardNormal.sample(&mut r))
    }

    #[test]
    fn positives_are_refused() {
        let x = latents(20, 1);
        let mut labels = vec![0u8; 20];
        labels[7] = 1;
        let err = fit_detector(DetectorKind::OcSvm, &x, &labels, &DetectorConfig::default(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::PositiveInFit(7)));
    }

    #[test]
    fn persisted_detectors_rescore_identically() {
        let x = latents(300, 2);
        let labels = vec![0u8; 300];
        let config = DetectorConfig { max_fit_samples: 200, trees: 20, ..DetectorConfig::default() };
        for kind in [DetectorKind::OcSvm, DetectorKind::IsolationForest] {
            let d = fit_detector(kind, &x, &labels, &config, Execution::Parallel).unwrap();
            let mut buf = Vec::new();
            d.to_writer(&mut buf).unwrap();
            let back = Detector::from_reader(buf.as_slice()).unwrap();
            assert_eq!(back, d);
            let a = score_windows(&d, &x, Execution::Parallel);
            let b = score_windows(&back, &x, Execution::Sequential);
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            let dup = x.select(Axis(0), &[4, 4]);
            let s = score_windows(&d, &dup, Execution::Sequential);
            assert_eq!(s[0], s[1]);
        }
    }

    #[test]
    fn scores_csv() {
        let points = PointScores { scores: vec![0.5, 2.0], inherited: vec![false, false] };
        let series = ScoreSeries::new(10, vec![1.0], points, 1.0);
        let mut out = Vec::new();
        series.write_csv(&[Label::Normal, Label::Anomaly], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "step,point_score,decision,label\n10,0.5,0,0\n11,2,1,1\n");
    }
}
