//! Episodic bidding environment: one episode is one event day, one step is
//! one event slot. Both agents act on the same state and are paid the same
//! slot profit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{self, Bid, ConsumptionRecord, SlotOutcome};
use crate::sim::{CustomerProfile, DayScenario, DayStamp, McpModel, SimError, TouSchedule};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("episode already terminated")]
    Terminated,
    #[error("day has {got} customers, environment expects {expected}")]
    PopulationMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Market(#[from] market::MarketError),
}

/// Observation shared by the price and quantity agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Quarter-hour slot of the day.
    pub slot: usize,
    pub day_of_year: u32,
    pub weekend: bool,
    /// Every customer's offer for this slot, zero for non-participants.
    pub offers: Vec<f64>,
    pub reserve: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub price: f64,
    pub quantity: f64,
}

impl EnvAction {
    pub const NEUTRAL: EnvAction = EnvAction { price: 0.0, quantity: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionBounds {
    pub price_min: f64,
    pub price_max: f64,
    pub quantity_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { price_min: 0.0, price_max: 10.0, quantity_max: 300.0 }
    }
}

impl ActionBounds {
    /// Clips into bounds, reporting whether anything moved.
    pub fn clip(&self, a: EnvAction) -> (EnvAction, bool) {
        let price = if a.price.is_nan() { self.price_min } else { a.price.clamp(self.price_min, self.price_max) };
        let quantity = if a.quantity.is_nan() { 0.0 } else { a.quantity.clamp(0.0, self.quantity_max) };
        let clipped = EnvAction { price, quantity };
        (clipped, clipped != a)
    }
}

/// Fixed normalization of [`EnvState`] into network features:
/// `[t/95, day_of_year/365, weekend, offers/price_max..., reserve/v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEncoder {
    pub customers: usize,
    pub price_max: f64,
    pub reserve_max: f64,
    /// When false the date feature is always zero.
    pub include_date: bool,
}

impl StateEncoder {
    pub const STAMP_FEATURES: usize = 3;

    pub fn len(&self) -> usize {
        Self::STAMP_FEATURES + self.customers + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, s: &EnvState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.push(s.slot as f64 / 95.0);
        x.push(if self.include_date { s.day_of_year as f64 / 365.0 } else { 0.0 });
        x.push(if s.weekend { 1.0 } else { 0.0 });
        x.extend(s.offers.iter().map(|o| o / self.price_max));
        x.push(s.reserve / self.reserve_max);
        x
    }

    pub fn decode(&self, x: &[f64]) -> EnvState {
        let n = self.customers;
        EnvState {
            slot: (x[0] * 95.0).round() as usize,
            day_of_year: (x[1] * 365.0).round() as u32,
            weekend: x[2] > 0.5,
            offers: x[3..3 + n].iter().map(|v| v * self.price_max).collect(),
            reserve: x[3 + n] * self.reserve_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Slot profit in currency, unscaled.
    pub reward: f64,
    /// State of the next slot; equals the current state on the terminal step.
    pub next_state: EnvState,
    pub terminal: bool,
    pub outcome: SlotOutcome,
    /// The action was outside its bounds and got clipped.
    pub clipped: bool,
}

/// Drives one event day at a time through settlement.
#[derive(Debug, Clone)]
pub struct Environment {
    mcp: McpModel,
    tariff: TouSchedule,
    population: Vec<CustomerProfile>,
    bounds: ActionBounds,
    day: Option<DayScenario>,
    cursor: usize,
}

impl Environment {
    pub fn new(
        mcp: McpModel,
        tariff: TouSchedule,
        population: Vec<CustomerProfile>,
        bounds: ActionBounds,
    ) -> Self {
        Self { mcp, tariff, population, bounds, day: None, cursor: 0 }
    }

    pub fn bounds(&self) -> ActionBounds {
        self.bounds
    }

    pub fn population(&self) -> &[CustomerProfile] {
        &self.population
    }

    pub fn day(&self) -> Option<&DayScenario> {
        self.day.as_ref()
    }

    /// Index of the next slot to be settled within the event.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn reset(&mut self, day: DayScenario) -> Result<EnvState, EnvError> {
        if day.plans.len() != self.population.len() {
            return Err(EnvError::PopulationMismatch {
                expected: self.population.len(),
                got: day.plans.len(),
            });
        }
        let state = state_at(&day, 0);
        self.day = Some(day);
        self.cursor = 0;
        Ok(state)
    }

    pub fn state(&self) -> Result<EnvState, EnvError> {
        let day = self.day.as_ref().ok_or(EnvError::NotReset)?;
        if self.cursor >= day.n_slots() {
            return Err(EnvError::Terminated);
        }
        Ok(state_at(day, self.cursor))
    }

    /// Settles the current slot. The clearing price is only computed here,
    /// after the action is fixed.
    pub fn step(&mut self, action: EnvAction) -> Result<StepResult, EnvError> {
        let day = self.day.as_ref().ok_or(EnvError::NotReset)?;
        let n = self.cursor;
        if n >= day.n_slots() {
            return Err(EnvError::Terminated);
        }
        let (action, clipped) = self.bounds.clip(action);
        let slot = day.event.start_slot + n;
        let mcp = self.mcp.clearing_price(slot as f64, day.reserve[n], day.mcp_noise[n])?;
        let bid = Bid { price: action.price, quantity: action.quantity };
        let win = market::clears(&bid, mcp);
        let offers = day.offers_at(n);
        let settled = if win {
            market::settle_customers(&offers, bid.price)
        } else {
            vec![false; offers.len()]
        };
        let shedding = if win {
            let mut records = Vec::with_capacity(offers.len());
            for (i, customer) in self.population.iter().enumerate() {
                let base = day.base_load_kw[n][i];
                let actual = customer.consumption(&self.tariff, slot, base, settled[i], offers[i])?;
                records.push(ConsumptionRecord {
                    customer_id: customer.customer_id,
                    slot,
                    actual_kw: actual,
                    baseline_kw: day.baseline_kw[i],
                });
            }
            market::actual_shedding(&records)
        } else {
            market::Shedding { total: 0.0, per_customer: vec![0.0; offers.len()] }
        };
        let rate = market::execution_rate(bid.quantity, shedding.total);
        let incentive = market::incentive_ratio(rate)?;
        let profit = market::slot_profit(
            win,
            incentive,
            bid.price,
            &shedding,
            &settled,
            &offers,
            day.event.slot_hours,
        );
        let outcome = SlotOutcome {
            slot,
            mcp,
            bid,
            win,
            settled,
            shedding: shedding.total,
            per_customer_shedding: shedding.per_customer,
            execution_rate: rate,
            incentive,
            profit,
        };
        debug_assert!(
            (recompute_profit(&outcome, &offers, day.event.slot_hours) - profit).abs()
                <= 1e-9 * profit.abs().max(1.0),
            "reward disagrees with settlement recomputation"
        );
        self.cursor += 1;
        let terminal = self.cursor == day.n_slots();
        let next_state = if terminal { state_at(day, n) } else { state_at(day, self.cursor) };
        Ok(StepResult { reward: profit, next_state, terminal, outcome, clipped })
    }
}

fn state_at(day: &DayScenario, n: usize) -> EnvState {
    let DayStamp { day_of_year, weekend, .. } = day.stamp;
    EnvState {
        slot: day.event.start_slot + n,
        day_of_year,
        weekend,
        offers: day.offers_at(n),
        reserve: day.reserve[n],
    }
}

/// Profit rebuilt from a logged outcome with plain loops.
pub fn recompute_profit(o: &SlotOutcome, offers: &[f64], slot_hours: f64) -> f64 {
    if !o.win {
        return 0.0;
    }
    let mut total = o.incentive * o.bid.price * o.shedding;
    for i in 0..offers.len() {
        if o.settled[i] {
            total -= offers[i] * o.per_customer_shedding[i];
        }
    }
    total * slot_hours
}
