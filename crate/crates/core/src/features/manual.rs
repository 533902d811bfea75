use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::{EventKind, Label, LabeledSeries, LobSnapshot};

pub const MANUAL_FEATURES: [&str; 12] = [
    "midprice",
    "spread",
    "log_return",
    "return_volatility",
    "bid_depth",
    "ask_depth",
    "volume_imbalance",
    "level1_imbalance",
    "bid_depth_slope",
    "ask_depth_slope",
    "trade_intensity",
    "cancel_submit_ratio",
];

/// Column names of the raw LOB block, LOBSTER column order.
pub fn lob_column_names(levels: usize) -> Vec<String> {
    (1..=levels)
        .flat_map(|i| [format!("ask_price_{i}"), format!("ask_size_{i}"), format!("bid_price_{i}"), format!("bid_size_{i}")])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Window of the rolling volatility, intensity and cancel-ratio features.
    pub rolling_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { rolling_window: 50 }
    }
}

/// Per-step feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub levels: usize,
    /// n × 4·l raw book values (ticks and shares).
    pub lob: Array2<f64>,
    /// n × 4·l; false on placeholder levels (zero volume).
    pub lob_valid: Array2<bool>,
    /// n × 12 engineered features, ordered as [`MANUAL_FEATURES`].
    pub manual: Array2<f64>,
    pub labels: Vec<Label>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = lob_column_names(self.levels);
        names.extend(MANUAL_FEATURES.iter().map(|s| s.to_string()));
        names
    }
}

fn depth_slope(volumes: &[u64]) -> f64 {
    let live: Vec<(f64, f64)> = volumes
        .iter()
        .enumerate()
        .take_while(|(_, &v)| v > 0)
        .map(|(i, &v)| ((i + 1) as f64, v as f64))
        .collect();
    if live.len() < 2 {
        return 0.0;
    }
    let n = live.len() as f64;
    let mx = live.iter().map(|p| p.0).sum::<f64>() / n;
    let my = live.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = live.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = live.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn ratio(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        (a - b) / (a + b)
    } else {
        0.0
    }
}

fn mid(s: &LobSnapshot) -> f64 {
    (s.best_ask() + s.best_bid()) as f64 / 2.0
}

/// Builds the raw LOB block and the twelve manual features.
///
/// Messages are attributed to the first snapshot whose time is at or after
/// the message time. Rolling features use the trailing
/// `min(rolling_window, t + 1)` steps.
pub fn build_manual_features(series: &LabeledSeries, config: &FeatureConfig) -> Result<FeatureFrame> {
    let n = series.len();
    let w = config.rolling_window.max(1);
    if n < w {
        return Err(Error::shape(format!("series of {n} steps is shorter than the rolling window {w}")));
    }
    let l = series.levels();
    let mut lob = Array2::<f64>::zeros((n, 4 * l));
    let mut lob_valid = Array2::from_elem((n, 4 * l), true);
    for (t, s) in series.snapshots.iter().enumerate() {
        for i in 0..l {
            let vals = [s.ask_price[i] as f64, s.ask_volume[i] as f64, s.bid_price[i] as f64, s.bid_volume[i] as f64];
            for (j, v) in vals.into_iter().enumerate() {
                lob[[t, 4 * i + j]] = v;
            }
            if s.ask_volume[i] == 0 {
                lob_valid[[t, 4 * i]] = false;
                lob_valid[[t, 4 * i + 1]] = false;
            }
            if s.bid_volume[i] == 0 {
                lob_valid[[t, 4 * i + 2]] = false;
                lob_valid[[t, 4 * i + 3]] = false;
            }
        }
    }

    let times: Vec<_> = series.snapshots.iter().map(|s| s.time).collect();
    let mut n_events = vec![0f64; n];
    let mut n_submit = vec![0f64; n];
    let mut n_cancel = vec![0f64; n];
    for e in &series.events {
        let step = times.partition_point(|&t| t < e.time).min(n - 1);
        n_events[step] += 1.0;
        if e.kind == EventKind::Submission {
            n_submit[step] += 1.0;
        } else if e.kind.is_cancel() {
            n_cancel[step] += 1.0;
        }
    }

    let mids: Vec<f64> = series.snapshots.iter().map(mid).collect();
    let rets: Vec<f64> = (0..n).map(|t| if t == 0 { 0.0 } else { (mids[t] / mids[t - 1]).ln() }).collect();

    let mut manual = Array2::<f64>::zeros((n, MANUAL_FEATURES.len()));
    let (mut sum_ev, mut sum_sub, mut sum_can) = (0.0, 0.0, 0.0);
    for (t, s) in series.snapshots.iter().enumerate() {
        sum_ev += n_events[t];
        sum_sub += n_submit[t];
        sum_can += n_cancel[t];
        if t >= w {
            let o = t - w;
            sum_ev -= n_events[o];
            sum_sub -= n_submit[o];
            sum_can -= n_cancel[o];
        }
        let k = (t + 1).min(w) as f64;
        let lo = (t + 1).saturating_sub(w);
        let window = &rets[lo..=t];
        let mean_r = window.iter().sum::<f64>() / k;
        let vol = (window.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / k).sqrt();

        let bid_depth: f64 = s.bid_volume.iter().map(|&v| v as f64).sum();
        let ask_depth: f64 = s.ask_volume.iter().map(|&v| v as f64).sum();
        let row = [
            mids[t],
            (s.best_ask() - s.best_bid()) as f64,
            rets[t],
            vol,
            bid_depth,
            ask_depth,
            ratio(bid_depth, ask_depth),
            ratio(s.bid_volume[0] as f64, s.ask_volume[0] as f64),
            depth_slope(&s.bid_volume),
            depth_slope(&s.ask_volume),
            sum_ev / k,
            sum_can / sum_sub.max(1.0),
        ];
        for (j, v) in row.into_iter().enumerate() {
            manual[[t, j]] = v;
        }
    }
    Ok(FeatureFrame { levels: l, lob, lob_valid, manual, labels: series.labels.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::{Side, Timestamp, TradeEvent};

    fn snap(t: u64, ask: [(i64, u64); 2], bid: [(i64, u64); 2]) -> LobSnapshot {
        LobSnapshot {
            time: Timestamp::from_secs(t),
            ask_price: ask.iter().map(|x| x.0).collect(),
            ask_volume: ask.iter().map(|x| x.1).collect(),
            bid_price: bid.iter().map(|x| x.0).collect(),
            bid_volume: bid.iter().map(|x| x.1).collect(),
        }
    }

    fn ev(t: u64, kind: EventKind) -> TradeEvent {
        TradeEvent { time: Timestamp::from_secs(t), kind, order_id: 1, size: 1, price: 100, side: Side::Buy }
    }

    #[test]
    fn symmetric_book_has_zero_imbalance() {
        let s = LabeledSeries::unlabeled(vec![snap(0, [(101, 7), (102, 9)], [(100, 7), (99, 9)]); 3], vec![]);
        let f = build_manual_features(&s, &FeatureConfig { rolling_window: 2 }).unwrap();
        for t in 0..3 {
            assert_eq!(f.manual[[t, 6]], 0.0);
            assert_eq!(f.manual[[t, 7]], 0.0);
        }
    }

    #[test]
    fn constant_mid_has_zero_return_and_vol() {
        let s = LabeledSeries::unlabeled(vec![snap(0, [(101, 7), (102, 9)], [(99, 3), (98, 9)]); 60], vec![]);
        let f = build_manual_features(&s, &FeatureConfig::default()).unwrap();
        assert!(f.manual.column(2).iter().all(|&x| x == 0.0));
        assert!(f.manual.column(3).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn short_series_rejected() {
        let s = LabeledSeries::unlabeled(vec![snap(0, [(101, 7), (102, 9)], [(99, 3), (98, 9)]); 10], vec![]);
        assert!(build_manual_features(&s, &FeatureConfig::default()).is_err());
    }

    #[test]
    fn hand_computed_three_step_book() {
        let snaps = vec![
            snap(0, [(102, 10), (103, 20)], [(100, 30), (99, 10)]),
            snap(1, [(102, 10), (103, 40)], [(101, 10), (100, 20)]),
            snap(2, [(104, 5), (105, 5)], [(101, 10), (100, 10)]),
        ];
        let events = vec![
            ev(0, EventKind::Submission),
            ev(1, EventKind::Submission),
            ev(1, EventKind::PartialCancel),
            ev(2, EventKind::FullDelete),
            ev(2, EventKind::ExecuteVisible),
            ev(2, EventKind::FullDelete),
        ];
        let s = LabeledSeries::unlabeled(snaps, events);
        let f = build_manual_features(&s, &FeatureConfig { rolling_window: 2 }).unwrap();
        let r1 = (101.5f64 / 101.0).ln();
        let r2 = (102.5f64 / 101.5).ln();
        let expected: [[f64; 12]; 3] = [
            [101.0, 2.0, 0.0, 0.0, 40.0, 30.0, 10.0 / 70.0, 20.0 / 40.0, -20.0, 10.0, 1.0, 0.0],
            [101.5, 1.0, r1, r1.abs() / 2.0, 30.0, 50.0, -20.0 / 80.0, 0.0, 10.0, 30.0, 1.5, 0.5],
            [102.5, 3.0, r2, (r2 - r1).abs() / 2.0, 20.0, 10.0, 10.0 / 30.0, 5.0 / 15.0, 0.0, 0.0, 2.5, 3.0],
        ];
        for t in 0..3 {
            for j in 0..12 {
                let got = f.manual[[t, j]];
                assert!((got - expected[t][j]).abs() < 1e-12, "step {t} feature {}: {got} vs {}", MANUAL_FEATURES[j], expected[t][j]);
            }
        }
        assert_eq!(f.lob.row(1).to_vec(), vec![102.0, 10.0, 101.0, 10.0, 103.0, 40.0, 100.0, 20.0]);
    }
}
