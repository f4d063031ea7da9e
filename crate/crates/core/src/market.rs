//! Settlement arithmetic of the demand-bidding program.
//!
//! Everything here is a pure function of its inputs: customer baselines,
//! aggregated load shedding, the execution rate and the incentive bracket it
//! selects, customer settlement against the aggregator's bid price, and the
//! per-slot aggregator profit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of prior eligible days averaged into a customer baseline.
pub const CBL_HISTORY_DAYS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("baseline needs exactly {CBL_HISTORY_DAYS} eligible days, got {0}")]
    InvalidHistory(usize),
    #[error("execution rate must be non-negative, got {0}")]
    NegativeExecutionRate(f64),
    #[error("invalid event window: {0}")]
    InvalidEvent(String),
}

/// A demand-bidding event: `n_slots` consecutive slots of `slot_hours` each,
/// starting at quarter-hour slot `start_slot` of the day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbEvent {
    pub start_slot: usize,
    pub n_slots: usize,
    pub slot_hours: f64,
}

impl DbEvent {
    pub fn new(start_slot: usize, n_slots: usize, slot_hours: f64) -> Result<Self, MarketError> {
        if n_slots == 0 {
            return Err(MarketError::InvalidEvent("event needs at least one slot".into()));
        }
        if !(slot_hours > 0.0 && slot_hours.is_finite()) {
            return Err(MarketError::InvalidEvent(format!("slot length {slot_hours} h")));
        }
        Ok(Self { start_slot, n_slots, slot_hours })
    }

    /// Exclusive end slot, `start + n_slots`.
    pub fn end_slot(&self) -> usize {
        self.start_slot + self.n_slots
    }

    pub fn slots(&self) -> std::ops::Range<usize> {
        self.start_slot..self.end_slot()
    }
}

impl Default for DbEvent {
    fn default() -> Self {
        // 14:00 to 16:00 in quarter-hour slots.
        Self { start_slot: 56, n_slots: 8, slot_hours: 0.25 }
    }
}

/// A customer's offered curtailment prices over the event slots.
/// A price of exactly zero marks a slot the customer sits out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationPlan {
    pub customer_id: usize,
    pub prices: Vec<f64>,
}

impl ParticipationPlan {
    pub fn participates(&self, slot: usize) -> bool {
        self.prices[slot] > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub price: f64,
    pub quantity: f64,
}

impl Bid {
    pub const NON_PARTICIPATION: Bid = Bid { price: 0.0, quantity: 0.0 };

    pub fn participates(&self) -> bool {
        self.price > 0.0
    }
}

/// Bid price bounds; the lower bound is the non-participation price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BidBounds {
    pub price_min: f64,
    pub price_max: f64,
}

impl Default for BidBounds {
    fn default() -> Self {
        Self { price_min: 0.0, price_max: 10.0 }
    }
}

impl BidBounds {
    pub fn clip_price(&self, price: f64) -> f64 {
        price.clamp(self.price_min, self.price_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionRecord {
    pub customer_id: usize,
    pub slot: usize,
    pub actual_kw: f64,
    pub baseline_kw: f64,
}

/// Ratio of bid quantity to realized shedding.
///
/// The ratio is undefined when nothing was shed: `Unbounded` covers a
/// positive bid against zero shedding, `NoOp` covers a zero bid against zero
/// shedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExecutionRate {
    Finite(f64),
    Unbounded,
    NoOp,
}

impl ExecutionRate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            ExecutionRate::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// Float view used by logs: `inf` for `Unbounded`, `NaN` for `NoOp`.
    pub fn as_f64(&self) -> f64 {
        match *self {
            ExecutionRate::Finite(x) => x,
            ExecutionRate::Unbounded => f64::INFINITY,
            ExecutionRate::NoOp => f64::NAN,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            ExecutionRate::NoOp
        } else if x.is_infinite() {
            ExecutionRate::Unbounded
        } else {
            ExecutionRate::Finite(x)
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        matches!(*self, ExecutionRate::Finite(x) if lo <= x && x <= hi)
    }
}

/// Customer baseline load: mean of the in-window maximum demand over the
/// previous five eligible days. Filtering out event days, off-peak days and
/// weekends is left to the caller.
pub fn compute_cbl(daily_maxima: &[f64]) -> Result<f64, MarketError> {
    if daily_maxima.len() != CBL_HISTORY_DAYS {
        return Err(MarketError::InvalidHistory(daily_maxima.len()));
    }
    Ok(daily_maxima.iter().sum::<f64>() / CBL_HISTORY_DAYS as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shedding {
    pub total: f64,
    pub per_customer: Vec<f64>,
}

/// Aggregated shedding for one slot, each customer clamped at zero.
pub fn actual_shedding(records: &[ConsumptionRecord]) -> Shedding {
    let per_customer: Vec<f64> =
        records.iter().map(|r| (r.baseline_kw - r.actual_kw).max(0.0)).collect();
    Shedding { total: per_customer.iter().sum(), per_customer }
}

pub fn execution_rate(bid_quantity: f64, actual_quantity: f64) -> ExecutionRate {
    if actual_quantity > 0.0 {
        ExecutionRate::Finite(bid_quantity / actual_quantity)
    } else if bid_quantity > 0.0 {
        ExecutionRate::Unbounded
    } else {
        ExecutionRate::NoOp
    }
}

/// Incentive multiplier on market revenue for a given execution rate.
pub fn incentive_ratio(rate: ExecutionRate) -> Result<f64, MarketError> {
    let xi = match rate {
        ExecutionRate::Finite(x) if x < 0.0 || x.is_nan() => {
            return Err(MarketError::NegativeExecutionRate(x))
        }
        ExecutionRate::Finite(x) => x,
        ExecutionRate::Unbounded | ExecutionRate::NoOp => return Ok(1.0),
    };
    Ok(if (0.8..=1.2).contains(&xi) {
        1.1
    } else if (0.6..0.8).contains(&xi) || (xi > 1.2 && xi <= 1.5) {
        1.05
    } else {
        1.0
    })
}

/// Customers settled at the aggregator's bid price. Zero offers are
/// non-participants and never settle.
pub fn settle_customers(offers: &[f64], bid_price: f64) -> Vec<bool> {
    offers.iter().map(|&p| p > 0.0 && p <= bid_price).collect()
}

/// Aggregator profit for one slot. A lost bid earns nothing and costs nothing.
pub fn slot_profit(
    win: bool,
    incentive: f64,
    bid_price: f64,
    shedding: &Shedding,
    settled: &[bool],
    offers: &[f64],
    slot_hours: f64,
) -> f64 {
    if !win {
        return 0.0;
    }
    let revenue = incentive * bid_price * shedding.total;
    let cost: f64 = settled
        .iter()
        .zip(offers)
        .zip(&shedding.per_customer)
        .filter(|((&x, _), _)| x)
        .map(|((_, &price), &q)| price * q)
        .sum();
    (revenue - cost) * slot_hours
}

/// Settlement result of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: usize,
    pub mcp: f64,
    pub bid: Bid,
    pub win: bool,
    pub settled: Vec<bool>,
    pub shedding: f64,
    pub per_customer_shedding: Vec<f64>,
    pub execution_rate: ExecutionRate,
    pub incentive: f64,
    pub profit: f64,
}

impl SlotOutcome {
    /// A bid that cleared and was backed by real curtailment.
    pub fn deal(&self) -> bool {
        self.win && self.shedding > 0.0
    }
}

/// Market clearing for one slot: the bid wins when it participates and does
/// not exceed the clearing price.
pub fn clears(bid: &Bid, mcp: f64) -> bool {
    bid.participates() && bid.price <= mcp
}

/// Sum of per-slot profits over an event.
pub fn event_profit(outcomes: &[SlotOutcome]) -> f64 {
    outcomes.iter().map(|o| o.profit).sum()
}
