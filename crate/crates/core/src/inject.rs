//! Multilevel spoofing injection.
//!
//! An episode adds phantom volume `round(κ · trailing mean depth)` to one
//! side of the book at a starting level drawn from `level_distribution`,
//! optionally walks one level toward the touch (cancel + resubmit) while it
//! lives, and disappears at its end (cancellation). Labels are 1 exactly on
//! covered steps and matching submission/delete messages are appended.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::{AnomalySpan, BookSide, EventKind, Label, LabeledSeries, TradeEvent};
use crate::rng;

/// Order ids at or above this value belong to injected episodes.
pub const INJECTED_ORDER_BASE: u64 = 1 << 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectConfig {
    pub seed: u64,
    /// Expected episodes per 10⁴ steps.
    pub episode_rate: f64,
    /// Probability of each starting level 1..=l.
    pub level_distribution: Vec<f64>,
    /// Probability that an episode sits on the bid side.
    pub side_probability: f64,
    pub volume_multiplier_range: [f64; 2],
    /// Mean of the geometric duration law (support ≥ 1).
    pub mean_duration: f64,
    pub reposition_probability: f64,
    pub baseline_window: usize,
    pub max_retries: usize,
}

impl Default for InjectConfig {
    fn default() -> Self {
        InjectConfig {
            seed: 11,
            episode_rate: 20.0,
            level_distribution: vec![0.2; 5],
            side_probability: 0.5,
            volume_multiplier_range: [3.0, 5.0],
            mean_duration: 20.0,
            reposition_probability: 0.1,
            baseline_window: 100,
            max_retries: 100,
        }
    }
}

impl InjectConfig {
    /// All episodes start at `level` (1-based) of an `levels`-deep book.
    pub fn single_level(mut self, level: usize, levels: usize) -> Self {
        self.level_distribution = (1..=levels).map(|l| if l == level { 1.0 } else { 0.0 }).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(format!("inject.{m}")));
        if !(self.episode_rate >= 0.0 && self.episode_rate.is_finite()) {
            return fail("episode_rate must be >= 0");
        }
        if self.level_distribution.is_empty() || self.level_distribution.iter().any(|&p| !(p >= 0.0)) {
            return fail("level_distribution must be a non-empty probability vector");
        }
        let total: f64 = self.level_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return fail("level_distribution must sum to 1");
        }
        if !(0.0..=1.0).contains(&self.side_probability) {
            return fail("side_probability must lie in [0, 1]");
        }
        let [lo, hi] = self.volume_multiplier_range;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return fail("volume_multiplier_range must satisfy 1 <= min <= max");
        }
        if !(self.mean_duration >= 1.0 && self.mean_duration.is_finite()) {
            return fail("mean_duration must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.reposition_probability) {
            return fail("reposition_probability must lie in [0, 1]");
        }
        if self.baseline_window == 0 {
            return fail("baseline_window must be >= 1");
        }
        Ok(())
    }
}

/// A planned episode; the injected volume is resolved against the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePlan {
    pub start: usize,
    pub end: usize,
    pub side: BookSide,
    /// Occupied level (1-based) at each covered step.
    pub level_path: Vec<usize>,
    pub kappa: f64,
}

impl EpisodePlan {
    /// Episode at a fixed level with no repositioning.
    pub fn fixed(start: usize, duration: usize, level: usize, side: BookSide, kappa: f64) -> Self {
        EpisodePlan { start, end: start + duration - 1, side, level_path: vec![level; duration], kappa }
    }

    fn conflicts(&self, other: &EpisodePlan) -> bool {
        // one clear step between episodes keeps label runs and spans in bijection
        self.start <= other.end + 1 && other.start <= self.end + 1
    }
}

/// Realised episode bookkeeping.
pub type SpoofEpisode = AnomalySpan;

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn plan_episodes(series: &LabeledSeries, config: &InjectConfig) -> Result<Vec<EpisodePlan>> {
    config.validate()?;
    let n = series.len();
    let l = series.levels();
    if config.level_distribution.len() != l {
        return Err(Error::config(format!(
            "inject.level_distribution has {} entries for a {l}-level book",
            config.level_distribution.len()
        )));
    }
    if n < 2 || config.episode_rate == 0.0 {
        return Ok(Vec::new());
    }
    let mut r = rng::derived(config.seed, "inject", 0);
    let expected = config.episode_rate * n as f64 / 1e4;
    let count = Poisson::new(expected).map(|p| p.sample(&mut r) as usize).unwrap_or(0);
    let p_stop = 1.0 / config.mean_duration;
    let [k_lo, k_hi] = config.volume_multiplier_range;

    let mut plans: Vec<EpisodePlan> = Vec::with_capacity(count);
    for episode in 0..count {
        let mut placed = false;
        for _ in 0..=config.max_retries {
            let start = r.random_range(1..n);
            let mut duration = 1;
            while r.random::<f64>() >= p_stop {
                duration += 1;
            }
            let end = (start + duration - 1).min(n - 1);
            let side = if r.random::<f64>() < config.side_probability { BookSide::Bid } else { BookSide::Ask };
            let mut level = sample_index(&config.level_distribution, r.random()) + 1;
            let mut path = Vec::with_capacity(end - start + 1);
            path.push(level);
            for _ in start + 1..=end {
                if level > 1 && r.random::<f64>() < config.reposition_probability {
                    level -= 1;
                }
                path.push(level);
            }
            let kappa = if k_hi > k_lo { r.random_range(k_lo..=k_hi) } else { k_lo };
            let plan = EpisodePlan { start, end, side, level_path: path, kappa };
            let live = (start..=end).all(|t| series.snapshots[t].volume(side, plan.level_path[t - start] - 1) > 0);
            if live && plans.iter().all(|p| !p.conflicts(&plan)) {
                plans.push(plan);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InjectionDensity { episode, retries: config.max_retries });
        }
    }
    plans.sort_by_key(|p| p.start);
    Ok(plans)
}

/// Mean volume at (side, level) over the `window` steps preceding `start`.
pub fn trailing_mean_volume(series: &LabeledSeries, side: BookSide, level: usize, start: usize, window: usize) -> f64 {
    let lo = start.saturating_sub(window);
    let range = if start == 0 { 0..1 } else { lo..start };
    let n = range.len() as f64;
    range.map(|t| series.snapshots[t].volume(side, level - 1) as f64).sum::<f64>() / n
}

/// Applies explicit episode plans to a clean series.
pub fn apply_episodes(series: &LabeledSeries, plans: &[EpisodePlan], baseline_window: usize) -> Result<LabeledSeries> {
    if series.labels.iter().any(|l| *l != Label::Normal) || !series.spans.is_empty() {
        return Err(Error::config("injection requires an all-normal input series"));
    }
    let n = series.len();
    let l = series.levels();
    for (i, a) in plans.iter().enumerate() {
        if a.start > a.end || a.end >= n || a.level_path.len() != a.end - a.start + 1 {
            return Err(Error::shape(format!("episode {i} does not fit the series")));
        }
        if a.level_path.iter().any(|&lv| lv == 0 || lv > l) {
            return Err(Error::shape(format!("episode {i} level outside 1..={l}")));
        }
        if plans[..i].iter().any(|b| b.conflicts(a)) {
            return Err(Error::shape(format!("episode {i} overlaps another episode")));
        }
    }
    let mut out = series.clone();
    let mut injected_events = Vec::new();
    for (idx, plan) in plans.iter().enumerate() {
        let base = trailing_mean_volume(series, plan.side, plan.level_path[0], plan.start, baseline_window);
        let volume = ((plan.kappa * base).round() as u64).max(1);
        let mut order_id = INJECTED_ORDER_BASE + (idx as u64) * 4096;
        let side = plan.side.order_side();
        for t in plan.start..=plan.end {
            let level = plan.level_path[t - plan.start];
            *out.snapshots[t].volume_mut(plan.side, level - 1) += volume;
            out.labels[t] = Label::Anomaly;
            let time = out.snapshots[t].time;
            let price = out.snapshots[t].price(plan.side, level - 1);
            if t == plan.start {
                injected_events.push(TradeEvent { time, kind: EventKind::Submission, order_id, size: volume, price, side });
            } else if level != plan.level_path[t - plan.start - 1] {
                let old_price = out.snapshots[t].price(plan.side, plan.level_path[t - plan.start - 1] - 1);
                injected_events.push(TradeEvent { time, kind: EventKind::FullDelete, order_id, size: volume, price: old_price, side });
                order_id += 1;
                injected_events.push(TradeEvent { time, kind: EventKind::Submission, order_id, size: volume, price, side });
            }
        }
        if plan.end + 1 < n {
            let last_level = *plan.level_path.last().expect("non-empty path");
            let snap = &out.snapshots[plan.end + 1];
            injected_events.push(TradeEvent {
                time: snap.time,
                kind: EventKind::FullDelete,
                order_id,
                size: volume,
                price: snap.price(plan.side, last_level - 1),
                side,
            });
        }
        out.spans.push(AnomalySpan {
            start: plan.start,
            end: plan.end,
            side: plan.side,
            levels: plan.level_path.clone(),
            volume,
        });
    }
    out.events.extend(injected_events);
    out.events.sort_by_key(|e| e.time);
    Ok(out)
}

pub fn inject(series: &LabeledSeries, config: &InjectConfig) -> Result<LabeledSeries> {
    let plans = plan_episodes(series, config)?;
    apply_episodes(series, &plans, config.baseline_window)
}

/// Undoes an injection using the span bookkeeping.
pub fn strip_injections(series: &LabeledSeries) -> LabeledSeries {
    let mut out = series.clone();
    for span in &series.spans {
        for t in span.start..=span.end {
            *out.snapshots[t].volume_mut(span.side, span.level_at(t) - 1) -= span.volume;
        }
    }
    out.events.retain(|e| e.order_id < INJECTED_ORDER_BASE);
    out.labels.iter_mut().for_each(|l| *l = Label::Normal);
    out.spans.clear();
    out
}

/// Evaluation view keeping as positives only the spans whose whole level
/// path lies in `keep_levels`; the steps of every other span become
/// [`Label::Ignore`].
pub fn level_restricted_view(series: &LabeledSeries, keep_levels: &BTreeSet<usize>) -> Result<LabeledSeries> {
    if keep_levels.is_empty() {
        return Err(Error::config("keep_levels must not be empty"));
    }
    let l = series.levels();
    if let Some(bad) = keep_levels.iter().find(|&&lv| lv == 0 || lv > l) {
        return Err(Error::config(format!("keep level {bad} outside 1..={l}")));
    }
    let mut out = series.clone();
    for span in &series.spans {
        if !span.levels.iter().all(|lv| keep_levels.contains(lv)) {
            out.labels[span.start..=span.end].iter_mut().for_each(|x| *x = Label::Ignore);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use proptest::prelude::*;

    fn base(steps: usize, seed: u64) -> LabeledSeries {
        generate(&SynthConfig { seed, steps, ..SynthConfig::default() }).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let s = base(2000, 1);
        let cfg = InjectConfig { episode_rate: 0.0, ..InjectConfig::default() };
        assert_eq!(inject(&s, &cfg).unwrap(), s);
    }

    #[test]
    fn forced_episode_matches_independent_recompute() {
        let s = base(400, 2);
        let plan = EpisodePlan::fixed(100, 10, 3, BookSide::Ask, 4.0);
        let out = apply_episodes(&s, &[plan], 100).unwrap();
        let trailing: f64 = (0..100).map(|t| s.snapshots[t].ask_volume[2] as f64).sum::<f64>() / 100.0;
        let add = (4.0 * trailing).round() as u64;
        for t in 0..s.len() {
            let expect = if (100..110).contains(&t) { s.snapshots[t].ask_volume[2] + add } else { s.snapshots[t].ask_volume[2] };
            assert_eq!(out.snapshots[t].ask_volume[2], expect, "step {t}");
            assert_eq!(out.labels[t].is_anomaly(), (100..110).contains(&t));
            assert_eq!(out.snapshots[t].bid_volume, s.snapshots[t].bid_volume);
        }
        out.validate().unwrap();
    }

    #[test]
    fn label_fraction_tracks_rate() {
        let s = base(50_000, 3);
        let cfg = InjectConfig { seed: 11, episode_rate: 5.0, ..InjectConfig::default() };
        let out = inject(&s, &cfg).unwrap();
        let frac = out.positive_count() as f64 / out.len() as f64;
        let expected = 5.0 * 20.0 / 1e4;
        assert!(frac >= 0.5 * expected && frac <= 2.0 * expected, "fraction {frac}");
    }

    #[test]
    fn reposition_moves_toward_touch() {
        let s = base(3000, 4);
        let cfg = InjectConfig { episode_rate: 20.0, reposition_probability: 0.5, ..InjectConfig::default() };
        let out = inject(&s, &cfg).unwrap();
        assert!(!out.spans.is_empty());
        for span in &out.spans {
            for w in span.levels.windows(2) {
                assert!(w[1] == w[0] || w[1] + 1 == w[0]);
            }
        }
        out.validate().unwrap();
        assert_eq!(strip_injections(&out), s);
    }

    #[test]
    fn density_too_high_errors() {
        let s = base(200, 5);
        let cfg = InjectConfig { episode_rate: 5000.0, max_retries: 5, ..InjectConfig::default() };
        assert!(matches!(inject(&s, &cfg), Err(Error::InjectionDensity { .. })));
    }

    #[test]
    fn overlapping_plans_rejected() {
        let s = base(300, 6);
        let a = EpisodePlan::fixed(50, 10, 2, BookSide::Bid, 3.0);
        let b = EpisodePlan::fixed(55, 10, 2, BookSide::Ask, 3.0);
        assert!(apply_episodes(&s, &[a, b], 100).is_err());
    }

    #[test]
    fn restricted_view_cases() {
        let s = base(600, 7);
        let only_level1 = apply_episodes(&s, &[EpisodePlan::fixed(200, 15, 1, BookSide::Bid, 3.0)], 100).unwrap();
        let all: BTreeSet<usize> = (1..=5).collect();
        assert_eq!(level_restricted_view(&only_level1, &all).unwrap(), only_level1);
        let deep: BTreeSet<usize> = (2..=5).collect();
        let v = level_restricted_view(&only_level1, &deep).unwrap();
        assert_eq!(v.positive_count(), 0);
        assert!(v.labels[200..215].iter().all(|l| *l == Label::Ignore));
        assert!(level_restricted_view(&only_level1, &BTreeSet::new()).is_err());
    }

    #[test]
    fn restricted_view_counts_deep_spans() {
        let s = base(20_000, 8);
        let cfg = InjectConfig { episode_rate: 20.0, reposition_probability: 0.2, ..InjectConfig::default() };
        let out = inject(&s, &cfg).unwrap();
        let deep: BTreeSet<usize> = (2..=5).collect();
        let v = level_restricted_view(&out, &deep).unwrap();
        let oracle: usize = out
            .spans
            .iter()
            .filter(|sp| sp.levels.iter().all(|lv| (2..=5).contains(lv)))
            .map(|sp| sp.len())
            .sum();
        assert_eq!(v.positive_count(), oracle);
        assert!(oracle < out.positive_count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn injection_only_adds_volume_and_strips_back(seed in 0u64..10_000, rate in 1.0f64..60.0, repo in 0.0f64..0.5) {
            let s = base(1500, seed);
            let cfg = InjectConfig { seed: seed ^ 0xabc, episode_rate: rate, reposition_probability: repo, ..InjectConfig::default() };
            let out = inject(&s, &cfg).unwrap();
            out.validate().unwrap();
            for (a, b) in s.snapshots.iter().zip(&out.snapshots) {
                prop_assert_eq!(&a.ask_price, &b.ask_price);
                prop_assert_eq!(&a.bid_price, &b.bid_price);
                prop_assert!(a.ask_volume.iter().zip(&b.ask_volume).all(|(x, y)| y >= x));
                prop_assert!(a.bid_volume.iter().zip(&b.bid_volume).all(|(x, y)| y >= x));
            }
            let covered: usize = out.spans.iter().map(|sp| sp.len()).sum();
            prop_assert_eq!(covered, out.positive_count());
            prop_assert_eq!(strip_injections(&out), s);
        }
    }
}
