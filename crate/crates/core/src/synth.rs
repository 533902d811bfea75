//! Seeded synthetic order-book generator.
//!
//! The latent fair price follows a discretised Ornstein–Uhlenbeck process
//! around `base_price`; the touch is the fair price rounded to the tick grid
//! and the spread is a reflecting walk on `1..=max_spread` ticks. Deeper
//! levels sit one tick apart. Each (side, level) volume is kept from the
//! previous step with probability `volume_persistence` and otherwise redrawn
//! from a gamma–Poisson (negative-binomial) law with mean `depth_mean[i]`
//! and variance `μ + depth_dispersion[i]·μ²`.
//!
//! Message events are derived from successive snapshot diffs, plus
//! `Poisson(event_rate)` "flicker" orders per step that are submitted and
//! deleted within the step without altering the book.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::{BookSide, EventKind, LabeledSeries, LobSnapshot, Timestamp, TradeEvent};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub steps: usize,
    pub levels: usize,
    pub tick_size: i64,
    pub base_price: i64,
    /// Standard deviation of the fair-price innovation, ticks per step.
    pub midprice_volatility: f64,
    /// Fraction of the gap to `base_price` closed per step; 0 disables reversion.
    pub mean_reversion: f64,
    pub max_spread: i64,
    /// Per-step probability of a ±1 tick spread move (each direction).
    pub spread_move_prob: f64,
    pub depth_mean: Vec<f64>,
    pub depth_dispersion: Vec<f64>,
    pub volume_persistence: f64,
    pub event_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let levels = 5;
        SynthConfig {
            seed: 7,
            steps: 50_000,
            levels,
            tick_size: 1,
            base_price: 1_000_000,
            midprice_volatility: 0.5,
            mean_reversion: 0.02,
            max_spread: 4,
            spread_move_prob: 0.05,
            depth_mean: (0..levels).map(|i| 100.0 + 50.0 * i as f64).collect(),
            depth_dispersion: vec![0.3; levels],
            volume_persistence: 0.9,
            event_rate: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(format!("synth.{m}")));
        if self.steps < 1 {
            return fail("steps must be >= 1".into());
        }
        if self.levels < 1 {
            return fail("levels must be >= 1".into());
        }
        if self.tick_size < 1 {
            return fail("tick_size must be >= 1".into());
        }
        if self.depth_mean.len() != self.levels || self.depth_dispersion.len() != self.levels {
            return fail(format!("depth_mean/depth_dispersion need {} entries", self.levels));
        }
        if let Some(i) = self.depth_mean.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return fail(format!("depth_mean[{i}] must be > 0"));
        }
        if let Some(i) = self.depth_dispersion.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return fail(format!("depth_dispersion[{i}] must be > 0"));
        }
        if !(self.midprice_volatility >= 0.0 && self.midprice_volatility.is_finite()) {
            return fail("midprice_volatility must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.mean_reversion) {
            return fail("mean_reversion must lie in [0, 1]".into());
        }
        if self.max_spread < 1 {
            return fail("max_spread must be >= 1".into());
        }
        if !(0.0..=0.5).contains(&self.spread_move_prob) {
            return fail("spread_move_prob must lie in [0, 0.5]".into());
        }
        if !(0.0..=1.0).contains(&self.volume_persistence) {
            return fail("volume_persistence must lie in [0, 1]".into());
        }
        if !(self.event_rate >= 0.0 && self.event_rate.is_finite()) {
            return fail("event_rate must be >= 0".into());
        }
        if self.base_price - (self.max_spread + self.levels as i64 + 1) * self.tick_size <= 0 {
            return fail("base_price too small for the ladder".into());
        }
        Ok(())
    }
}

struct DepthLaw {
    gamma: Gamma<f64>,
}

impl DepthLaw {
    fn new(mean: f64, dispersion: f64) -> Self {
        let shape = 1.0 / dispersion;
        DepthLaw { gamma: Gamma::new(shape, mean / shape).expect("validated parameters") }
    }

    fn draw(&self, r: &mut rng::Rng) -> u64 {
        let lambda = self.gamma.sample(r);
        let v = if lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(r)).unwrap_or(lambda.round())
        } else {
            0.0
        };
        (v as u64).max(1)
    }
}

pub fn generate(config: &SynthConfig) -> Result<LabeledSeries> {
    config.validate()?;
    let l = config.levels;
    let tick = config.tick_size;
    let mut r = rng::derived(config.seed, "synth", 0);
    let laws: Vec<DepthLaw> = (0..l)
        .map(|i| DepthLaw::new(config.depth_mean[i], config.depth_dispersion[i]))
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let flicker = (config.event_rate > 0.0).then(|| Poisson::new(config.event_rate).expect("positive rate"));
    let dynamic = config.midprice_volatility > 0.0;

    let base = config.base_price as f64;
    let mut fair = base;
    let mut spread: i64 = 1;
    let mut ask_vol: Vec<u64> = laws.iter().map(|d| d.draw(&mut r)).collect();
    let mut bid_vol: Vec<u64> = laws.iter().map(|d| d.draw(&mut r)).collect();

    let mut snapshots = Vec::with_capacity(config.steps);
    let mut events = Vec::new();
    let mut next_id: u64 = 1;
    let mut resting_ask: Vec<u64> = Vec::with_capacity(l);
    let mut resting_bid: Vec<u64> = Vec::with_capacity(l);

    for k in 0..config.steps {
        if k > 0 {
            if dynamic {
                fair += config.mean_reversion * (base - fair) + config.midprice_volatility * noise.sample(&mut r);
                let u: f64 = r.random();
                if u < config.spread_move_prob {
                    spread += 1;
                } else if u < 2.0 * config.spread_move_prob {
                    spread -= 1;
                }
                if spread < 1 {
                    spread = 2.min(config.max_spread);
                } else if spread > config.max_spread {
                    spread = (config.max_spread - 1).max(1);
                }
            }
            for (vols, _) in [(&mut ask_vol, 0), (&mut bid_vol, 1)] {
                for (v, law) in vols.iter_mut().zip(&laws) {
                    if r.random::<f64>() >= config.volume_persistence {
                        *v = law.draw(&mut r);
                    }
                }
            }
        }
        let half = spread as f64 * tick as f64 / 2.0;
        let bid1 = tick * ((fair - half) / tick as f64).round() as i64;
        let ask1 = bid1 + spread * tick;
        let snap = LobSnapshot {
            time: Timestamp::from_secs(k as u64),
            ask_price: (0..l as i64).map(|i| ask1 + i * tick).collect(),
            ask_volume: ask_vol.clone(),
            bid_price: (0..l as i64).map(|i| bid1 - i * tick).collect(),
            bid_volume: bid_vol.clone(),
        };
        match snapshots.last() {
            None => {
                for side in [BookSide::Ask, BookSide::Bid] {
                    let ids = if side == BookSide::Ask { &mut resting_ask } else { &mut resting_bid };
                    for lv in 0..l {
                        ids.push(next_id);
                        events.push(TradeEvent {
                            time: snap.time,
                            kind: EventKind::Submission,
                            order_id: next_id,
                            size: snap.volume(side, lv),
                            price: snap.price(side, lv),
                            side: side.order_side(),
                        });
                        next_id += 1;
                    }
                }
            }
            Some(prev) => {
                diff_events(prev, &snap, &mut resting_ask, &mut resting_bid, &mut next_id, &mut r, &mut events);
            }
        }
        if let Some(p) = &flicker {
            let n = p.sample(&mut r) as usize;
            for _ in 0..n {
                let side = if r.random::<bool>() { BookSide::Ask } else { BookSide::Bid };
                let lv = r.random_range(0..l);
                let size = ((config.depth_mean[lv] / 10.0).round() as u64).max(1);
                let price = snap.price(side, lv);
                for kind in [EventKind::Submission, EventKind::FullDelete] {
                    events.push(TradeEvent { time: snap.time, kind, order_id: next_id, size, price, side: side.order_side() });
                }
                next_id += 1;
            }
        }
        snapshots.push(snap);
    }
    Ok(LabeledSeries::unlabeled(snapshots, events))
}

fn diff_events(
    prev: &LobSnapshot,
    cur: &LobSnapshot,
    resting_ask: &mut [u64],
    resting_bid: &mut [u64],
    next_id: &mut u64,
    r: &mut rng::Rng,
    out: &mut Vec<TradeEvent>,
) {
    for side in [BookSide::Ask, BookSide::Bid] {
        let ids = if side == BookSide::Ask { &mut *resting_ask } else { &mut *resting_bid };
        for lv in 0..cur.levels() {
            let (p0, v0) = (prev.price(side, lv), prev.volume(side, lv));
            let (p1, v1) = (cur.price(side, lv), cur.volume(side, lv));
            let ev = |kind, order_id, size, price| TradeEvent { time: cur.time, kind, order_id, size, price, side: side.order_side() };
            if p0 != p1 {
                out.push(ev(EventKind::FullDelete, ids[lv], v0, p0));
                ids[lv] = *next_id;
                *next_id += 1;
                out.push(ev(EventKind::Submission, ids[lv], v1, p1));
            } else if v1 > v0 {
                out.push(ev(EventKind::Submission, *next_id, v1 - v0, p1));
                *next_id += 1;
            } else if v1 < v0 {
                let kind = if lv == 0 && r.random::<bool>() { EventKind::ExecuteVisible } else { EventKind::PartialCancel };
                out.push(ev(kind, ids[lv], v0 - v1, p1));
            }
        }
    }
}
