use ndarray::Axis;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::manual::FeatureFrame;
use super::split::SplitSpec;
use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero variance.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-score parameters, LOB columns first then manual features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// `{feature_name: {mean, std}}` in column order.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for ((n, m), s) in self.names.iter().zip(&self.mean).zip(&self.std) {
            let mut entry = Map::new();
            entry.insert("mean".into(), Value::from(*m));
            entry.insert("std".into(), Value::from(*s));
            map.insert(n.clone(), Value::Object(entry));
        }
        Value::Object(map)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| Error::shape("normalization stats must be a JSON object"))?;
        let mut stats = NormStats { names: Vec::new(), mean: Vec::new(), std: Vec::new() };
        for (name, entry) in obj {
            let get = |k: &str| {
                entry.get(k).and_then(Value::as_f64).ok_or_else(|| Error::shape(format!("stats for {name} lack '{k}'")))
            };
            stats.names.push(name.clone());
            stats.mean.push(get("mean")?);
            stats.std.push(get("std")?);
        }
        Ok(stats)
    }

    fn column(value: f64, mean: f64, std: f64) -> f64 {
        if std < STD_FLOOR {
            0.0
        } else {
            (value - mean) / std
        }
    }

    /// Applies the stored statistics to a frame; placeholder LOB cells map to 0.
    pub fn apply(&self, frame: &FeatureFrame) -> Result<FeatureFrame> {
        let names = frame.column_names();
        if names != self.names {
            return Err(Error::shape("normalization stats do not match the frame columns"));
        }
        let n_lob = frame.lob.ncols();
        let mut out = frame.clone();
        for ((t, j), v) in out.lob.indexed_iter_mut() {
            *v = if frame.lob_valid[[t, j]] { Self::column(*v, self.mean[j], self.std[j]) } else { 0.0 };
        }
        for ((_, j), v) in out.manual.indexed_iter_mut() {
            *v = Self::column(*v, self.mean[n_lob + j], self.std[n_lob + j]);
        }
        if out.lob.iter().chain(out.manual.iter()).any(|v| !v.is_finite()) {
            return Err(Error::shape("non-finite value after normalization"));
        }
        Ok(out)
    }
}

fn masked_stats(col: ndarray::ArrayView1<f64>, valid: Option<ndarray::ArrayView1<bool>>) -> (f64, f64) {
    let mut count = 0usize;
    let mut sum = 0.0;
    for (i, &v) in col.iter().enumerate() {
        if valid.is_none_or(|m| m[i]) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    let mut ss = 0.0;
    for (i, &v) in col.iter().enumerate() {
        if valid.is_none_or(|m| m[i]) {
            ss += (v - mean) * (v - mean);
        }
    }
    (mean, (ss / count as f64).sqrt())
}

/// Z-scores every column with mean and population std of the training range.
pub fn normalize(frame: &FeatureFrame, split: &SplitSpec) -> Result<(FeatureFrame, NormStats)> {
    let train = split.train.clone();
    if train.is_empty() || train.end > frame.len() {
        return Err(Error::shape("training range must be non-empty and inside the frame"));
    }
    let lob = frame.lob.slice(ndarray::s![train.clone(), ..]);
    let valid = frame.lob_valid.slice(ndarray::s![train.clone(), ..]);
    let manual = frame.manual.slice(ndarray::s![train, ..]);
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for (col, mask) in lob.axis_iter(Axis(1)).zip(valid.axis_iter(Axis(1))) {
        let (m, s) = masked_stats(col, Some(mask));
        mean.push(m);
        std.push(s);
    }
    for col in manual.axis_iter(Axis(1)) {
        let (m, s) = masked_stats(col, None);
        mean.push(m);
        std.push(s);
    }
    let stats = NormStats { names: frame.column_names(), mean, std };
    for (name, s) in stats.names.iter().zip(&stats.std) {
        if *s < STD_FLOOR {
            log::warn!("feature {name} has zero variance on the training range; normalized to 0");
        }
    }
    let out = stats.apply(frame)?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_manual_features, FeatureConfig, SplitMode};
    use crate::synth::{generate, SynthConfig};

    fn frame() -> FeatureFrame {
        let s = generate(&SynthConfig { steps: 3000, seed: 5, ..SynthConfig::default() }).unwrap();
        build_manual_features(&s, &FeatureConfig::default()).unwrap()
    }

    #[test]
    fn training_range_is_standardized() {
        let f = frame();
        let spec = SplitSpec::by_ratio(f.len(), [0.6, 0.2, 0.2], SplitMode::Traditional).unwrap();
        let (out, stats) = normalize(&f, &spec).unwrap();
        let train_lob = out.lob.slice(ndarray::s![spec.train.clone(), ..]).to_owned();
        let train_manual = out.manual.slice(ndarray::s![spec.train.clone(), ..]).to_owned();
        for (j, col) in train_lob.columns().into_iter().chain(train_manual.columns()).enumerate() {
            if stats.std[j] < STD_FLOOR {
                assert!(col.iter().all(|&v| v == 0.0));
                continue;
            }
            let m = col.mean().unwrap();
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-9, "column {j} mean {m}");
            assert!((sd - 1.0).abs() < 1e-9, "column {j} std {sd}");
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let mut f = frame();
        f.manual.column_mut(1).fill(2.0);
        let spec = SplitSpec::by_ratio(f.len(), [0.6, 0.2, 0.2], SplitMode::Traditional).unwrap();
        let (out, _) = normalize(&f, &spec).unwrap();
        assert!(out.manual.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reapplying_stats_is_bit_identical() {
        let f = frame();
        let spec = SplitSpec::by_ratio(f.len(), [0.6, 0.2, 0.2], SplitMode::Proposed).unwrap();
        let (out, stats) = normalize(&f, &spec).unwrap();
        let reloaded = NormStats::from_json(&serde_json::from_str(&stats.to_json().to_string()).unwrap()).unwrap();
        assert_eq!(reloaded, stats);
        let again = reloaded.apply(&f).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn stats_ignore_later_ranges() {
        let f = frame();
        let spec = SplitSpec::by_ratio(f.len(), [0.6, 0.2, 0.2], SplitMode::Traditional).unwrap();
        let (_, a) = normalize(&f, &spec).unwrap();
        let mut g = f.clone();
        let tail = spec.val.start;
        g.manual.slice_mut(ndarray::s![tail.., ..]).fill(1e6);
        let (_, b) = normalize(&g, &spec).unwrap();
        assert_eq!(a, b);
    }
}
