use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time of day as integer nanoseconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const NANOS_PER_SEC: u64 = 1_000_000_000;

    pub fn from_secs(secs: u64) -> Self {
        Timestamp(secs * Self::NANOS_PER_SEC)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_SEC as f64
    }
}

/// One time step of an `l`-level book. Index 0 is level 1 (the touch).
///
/// Prices are integer ticks (LOBSTER convention: price × 10⁴). A level with
/// zero volume is a placeholder for missing depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobSnapshot {
    pub time: Timestamp,
    pub ask_price: Vec<i64>,
    pub ask_volume: Vec<u64>,
    pub bid_price: Vec<i64>,
    pub bid_volume: Vec<u64>,
}

impl LobSnapshot {
    pub fn levels(&self) -> usize {
        self.ask_price.len()
    }

    pub fn best_ask(&self) -> i64 {
        self.ask_price[0]
    }

    pub fn best_bid(&self) -> i64 {
        self.bid_price[0]
    }

    pub fn price(&self, side: BookSide, level: usize) -> i64 {
        match side {
            BookSide::Ask => self.ask_price[level],
            BookSide::Bid => self.bid_price[level],
        }
    }

    pub fn volume(&self, side: BookSide, level: usize) -> u64 {
        match side {
            BookSide::Ask => self.ask_volume[level],
            BookSide::Bid => self.bid_volume[level],
        }
    }

    pub fn volume_mut(&mut self, side: BookSide, level: usize) -> &mut u64 {
        match side {
            BookSide::Ask => &mut self.ask_volume[level],
            BookSide::Bid => &mut self.bid_volume[level],
        }
    }

    /// Checks the ordering invariants; `line` is only used for the error.
    ///
    /// Live (non-zero volume) levels must form a prefix of the ladder and be
    /// strictly ordered away from the touch. Placeholder levels beyond the
    /// last live level need only be weakly ordered, which admits both the
    /// one-tick-beyond convention and LOBSTER's ±9999999999 dummies.
    pub fn validate(&self, line: usize) -> Result<()> {
        let l = self.levels();
        if l == 0 {
            return Err(Error::Validation { line, message: "snapshot has zero levels".into() });
        }
        if self.ask_volume.len() != l || self.bid_price.len() != l || self.bid_volume.len() != l {
            return Err(Error::Validation { line, message: "ragged level arrays".into() });
        }
        for (name, prices, vols, sign) in [
            ("ask", &self.ask_price, &self.ask_volume, 1i64),
            ("bid", &self.bid_price, &self.bid_volume, -1i64),
        ] {
            for i in 1..l {
                let level = i + 1;
                if vols[i] > 0 && vols[i - 1] == 0 {
                    return Err(Error::Validation {
                        line,
                        message: format!("{name} level {level} is live after a missing level"),
                    });
                }
                let step = sign * (prices[i] - prices[i - 1]);
                let ok = if vols[i] > 0 { step > 0 } else { step >= 0 };
                if !ok {
                    return Err(Error::Validation {
                        line,
                        message: format!(
                            "{name} price ordering violated at level {level}: {} then {}",
                            prices[i - 1],
                            prices[i]
                        ),
                    });
                }
            }
        }
        if self.ask_volume[0] > 0 && self.bid_volume[0] > 0 && self.bid_price[0] >= self.ask_price[0] {
            return Err(Error::Validation {
                line,
                message: format!(
                    "non-positive spread at level 1: bid {} >= ask {}",
                    self.bid_price[0], self.ask_price[0]
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Submission,
    PartialCancel,
    FullDelete,
    ExecuteVisible,
    ExecuteHidden,
    Halt,
}

impl EventKind {
    pub fn code(self) -> u8 {
        match self {
            EventKind::Submission => 1,
            EventKind::PartialCancel => 2,
            EventKind::FullDelete => 3,
            EventKind::ExecuteVisible => 4,
            EventKind::ExecuteHidden => 5,
            EventKind::Halt => 7,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            1 => EventKind::Submission,
            2 => EventKind::PartialCancel,
            3 => EventKind::FullDelete,
            4 => EventKind::ExecuteVisible,
            5 => EventKind::ExecuteHidden,
            7 => EventKind::Halt,
            _ => return None,
        })
    }

    pub fn is_cancel(self) -> bool {
        matches!(self, EventKind::PartialCancel | EventKind::FullDelete)
    }
}

/// Order direction as used in message files: buy = 1, sell = −1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn direction(self) -> i8 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }

    pub fn from_direction(d: i64) -> Option<Self> {
        match d {
            1 => Some(Side::Buy),
            -1 => Some(Side::Sell),
            _ => None,
        }
    }
}

/// Book side an order rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookSide {
    Bid,
    Ask,
}

impl BookSide {
    pub fn order_side(self) -> Side {
        match self {
            BookSide::Bid => Side::Buy,
            BookSide::Ask => Side::Sell,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub time: Timestamp,
    pub kind: EventKind,
    pub order_id: u64,
    pub size: u64,
    pub price: i64,
    pub side: Side,
}

/// Per-step ground truth. `Ignore` only appears in evaluation views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Label {
    #[default]
    Normal,
    Anomaly,
    Ignore,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    pub fn code(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
            Label::Ignore => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomaly),
            2 => Some(Label::Ignore),
            _ => None,
        }
    }
}

/// Injected episode bookkeeping: `levels[k]` is the (1-based) level occupied
/// at step `start + k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySpan {
    pub start: usize,
    pub end: usize,
    pub side: BookSide,
    pub levels: Vec<usize>,
    pub volume: u64,
}

impl AnomalySpan {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covers(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn level_at(&self, t: usize) -> usize {
        self.levels[t - self.start]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub snapshots: Vec<LobSnapshot>,
    pub events: Vec<TradeEvent>,
    pub labels: Vec<Label>,
    pub spans: Vec<AnomalySpan>,
}

impl LabeledSeries {
    /// Series with all-normal labels and no spans.
    pub fn unlabeled(snapshots: Vec<LobSnapshot>, events: Vec<TradeEvent>) -> Self {
        let labels = vec![Label::Normal; snapshots.len()];
        LabeledSeries { snapshots, events, labels, spans: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.snapshots.first().map_or(0, LobSnapshot::levels)
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomaly()).count()
    }

    /// Full consistency check: snapshot invariants, label/span bijection,
    /// monotone times.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.snapshots.len() {
            return Err(Error::shape(format!(
                "{} labels for {} snapshots",
                self.labels.len(),
                self.snapshots.len()
            )));
        }
        let l = self.levels();
        for (i, s) in self.snapshots.iter().enumerate() {
            if s.levels() != l {
                return Err(Error::Validation { line: i + 1, message: "mixed level counts".into() });
            }
            s.validate(i + 1)?;
            if i > 0 && s.time < self.snapshots[i - 1].time {
                return Err(Error::Validation { line: i + 1, message: "snapshot time decreases".into() });
            }
        }
        for w in self.events.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::Validation { line: 0, message: "event time decreases".into() });
            }
        }
        let mut covered = vec![false; self.len()];
        for span in &self.spans {
            if span.start > span.end || span.end >= self.len() || span.levels.len() != span.len() {
                return Err(Error::shape(format!("malformed span {span:?}")));
            }
            if span.levels.iter().any(|&lv| lv == 0 || lv > l) {
                return Err(Error::shape(format!("span level outside 1..={l}")));
            }
            for c in &mut covered[span.start..=span.end] {
                *c = true;
            }
        }
        for (i, (&c, &lab)) in covered.iter().zip(&self.labels).enumerate() {
            let ok = match lab {
                Label::Anomaly => c,
                Label::Normal => !c,
                Label::Ignore => true,
            };
            if !ok {
                return Err(Error::Validation {
                    line: i + 1,
                    message: format!("label {lab:?} disagrees with span coverage"),
                });
            }
        }
        Ok(())
    }
}
