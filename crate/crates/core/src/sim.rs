//! Simulators for the two uncertain signals the aggregator faces: the market
//! clearing price and customer consumption under curtailment. Also generates
//! the synthetic customer population, participation plans and reserve
//! forecasts that stand in for metered data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{self, DbEvent, ParticipationPlan, CBL_HISTORY_DAYS};

/// Quarter-hour slots per day.
pub const SLOTS_PER_DAY: usize = 96;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("reserve rate {0} outside [0, 1]")]
    ReserveOutOfRange(f64),
    #[error("time-of-use rate must be positive, got {0}")]
    NonPositiveTariff(f64),
    #[error("invalid simulator parameter: {0}")]
    InvalidParameter(String),
}

/// Deterministic RNG for a `(seed, stream)` pair. Different streams of one
/// seed are independent sequences.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids so that each consumer of randomness draws from its own sequence.
pub mod streams {
    pub const POPULATION: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const AGENT_INIT: u64 = 3;
    pub const EXPLORATION: u64 = 4;
    pub const REPLAY: u64 = 5;
    pub const BASELINE: u64 = 6;
    pub const VALIDATION: u64 = 7;
    pub const ONLINE: u64 = 8;
    pub const ONLINE_EXPLORATION: u64 = 9;
    pub const ONLINE_REPLAY: u64 = 10;
}

/// Second-order surface fit of the clearing price over slot-of-day `t` and
/// reserve rate `v`, plus additive Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McpModel {
    /// `[p1..p6]` for `p1 t² + p2 v² + p3 v t + p4 t + p5 v + p6`.
    pub coefficients: [f64; 6],
    pub noise_sigma: f64,
}

impl Default for McpModel {
    fn default() -> Self {
        Self {
            coefficients: [-0.00042, 126.7125, -0.06412, 0.04937, -55.07590, 7.45740],
            noise_sigma: 0.0,
        }
    }
}

impl McpModel {
    pub fn with_sigma(sigma: f64) -> Self {
        Self { noise_sigma: sigma, ..Self::default() }
    }

    pub fn polynomial(&self, t: f64, v: f64) -> f64 {
        let [p1, p2, p3, p4, p5, p6] = self.coefficients;
        p1 * t * t + p2 * v * v + p3 * v * t + p4 * t + p5 * v + p6
    }

    /// Clearing price for a given noise draw, clamped at zero.
    pub fn clearing_price(&self, t: f64, v: f64, noise: f64) -> Result<f64, SimError> {
        if !(0.0..=1.0).contains(&v) {
            return Err(SimError::ReserveOutOfRange(v));
        }
        Ok((self.polynomial(t, v) + noise).max(0.0))
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise_sigma > 0.0 {
            Normal::new(0.0, self.noise_sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, t: f64, v: f64, rng: &mut R) -> Result<f64, SimError> {
        let noise = self.draw_noise(rng);
        self.clearing_price(t, v, noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffBand {
    Peak,
    SemiPeak,
    OffPeak,
}

impl TariffBand {
    pub fn index(self) -> usize {
        match self {
            TariffBand::Peak => 0,
            TariffBand::SemiPeak => 1,
            TariffBand::OffPeak => 2,
        }
    }
}

/// Time-of-use schedule: hour ranges `[start, end)` per band and the band rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouSchedule {
    pub peak_hours: Vec<(f64, f64)>,
    pub semi_peak_hours: Vec<(f64, f64)>,
    pub peak_rate: f64,
    pub semi_peak_rate: f64,
    pub off_peak_rate: f64,
}

impl Default for TouSchedule {
    fn default() -> Self {
        Self {
            peak_hours: vec![(13.0, 17.0)],
            semi_peak_hours: vec![(9.0, 13.0), (17.0, 21.0)],
            peak_rate: 5.0,
            semi_peak_rate: 3.5,
            off_peak_rate: 2.0,
        }
    }
}

impl TouSchedule {
    pub fn band(&self, slot: usize) -> TariffBand {
        let hour = slot as f64 * 24.0 / SLOTS_PER_DAY as f64;
        let inside = |ranges: &[(f64, f64)]| ranges.iter().any(|&(a, b)| hour >= a && hour < b);
        if inside(&self.peak_hours) {
            TariffBand::Peak
        } else if inside(&self.semi_peak_hours) {
            TariffBand::SemiPeak
        } else {
            TariffBand::OffPeak
        }
    }

    pub fn rate(&self, band: TariffBand) -> f64 {
        match band {
            TariffBand::Peak => self.peak_rate,
            TariffBand::SemiPeak => self.semi_peak_rate,
            TariffBand::OffPeak => self.off_peak_rate,
        }
    }

    pub fn rate_at(&self, slot: usize) -> f64 {
        self.rate(self.band(slot))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadTemplate {
    /// Daytime plateau with a lower night level.
    Flat,
    /// Afternoon peak around 15:00.
    Peaked,
}

impl LoadTemplate {
    /// Relative load in (0, 1] at a slot of the day.
    pub fn shape(self, slot: usize) -> f64 {
        let hour = slot as f64 * 24.0 / SLOTS_PER_DAY as f64;
        match self {
            LoadTemplate::Flat => {
                // smooth step up at 07:00, down at 22:00
                let up = 1.0 / (1.0 + (-(hour - 7.0) * 2.0).exp());
                let down = 1.0 / (1.0 + ((hour - 22.0) * 2.0).exp());
                0.6 + 0.4 * up * down
            }
            LoadTemplate::Peaked => 0.5 + 0.5 * (-((hour - 15.0) / 3.0).powi(2)).exp(),
        }
    }
}

/// Elasticity bands and load parameters the population is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationConfig {
    pub customers: usize,
    pub elasticity_peak: (f64, f64),
    pub elasticity_semi_peak: (f64, f64),
    pub elasticity_off_peak: (f64, f64),
    /// Load scale range in kW.
    pub load_scale: (f64, f64),
    /// Probability of the peaked template; the rest get the flat one.
    pub peaked_fraction: f64,
    /// Day-to-day multiplicative load jitter, uniform in `[1 - j, 1 + j]`.
    pub load_jitter: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            customers: 16,
            elasticity_peak: (-0.4, 0.0),
            elasticity_semi_peak: (-0.6, -0.4),
            elasticity_off_peak: (-1.0, -0.6),
            load_scale: (20.0, 200.0),
            peaked_fraction: 0.5,
            load_jitter: 0.02,
        }
    }
}

/// How customers choose whether and at what price to offer curtailment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfferConfig {
    pub participation_prob: f64,
    /// Offer mean as a multiple of the slot's time-of-use rate.
    pub center_ratio: f64,
    /// Offer standard deviation as a multiple of the time-of-use rate.
    pub spread_ratio: f64,
    /// Upper truncation of offers.
    pub price_cap: f64,
}

impl Default for OfferConfig {
    fn default() -> Self {
        Self { participation_prob: 0.8, center_ratio: 0.9, spread_ratio: 0.3, price_cap: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub customer_id: usize,
    /// Price elasticity per tariff band, indexed by [`TariffBand::index`].
    pub elasticity: [f64; 3],
    pub template: LoadTemplate,
    pub load_scale_kw: f64,
    pub participation_prob: f64,
    pub offer_center_ratio: f64,
    pub offer_spread_ratio: f64,
}

impl CustomerProfile {
    pub fn elasticity_for(&self, band: TariffBand) -> f64 {
        self.elasticity[band.index()]
    }

    /// Nominal load at a slot of the day, before day-level jitter.
    pub fn base_load(&self, slot: usize) -> f64 {
        self.load_scale_kw * self.template.shape(slot)
    }

    /// Consumption during an event slot given this customer's offer.
    pub fn consumption(
        &self,
        tariff: &TouSchedule,
        slot: usize,
        base_load: f64,
        settled: bool,
        offer: f64,
    ) -> Result<f64, SimError> {
        let band = tariff.band(slot);
        simulate_consumption(base_load, self.elasticity_for(band), tariff.rate(band), settled, offer)
    }
}

/// Inverts the elasticity relation
/// `ε = ((p - p0) / p0) / (|λ - λ_tou| / λ_tou)` for the consumption `p` of a
/// settled customer, clamped to `[0, p0]`. Unsettled customers consume `p0`.
pub fn simulate_consumption(
    base_load: f64,
    elasticity: f64,
    tou_rate: f64,
    settled: bool,
    offer: f64,
) -> Result<f64, SimError> {
    if !(tou_rate > 0.0) {
        return Err(SimError::NonPositiveTariff(tou_rate));
    }
    if !settled {
        return Ok(base_load);
    }
    let deviation = (offer - tou_rate).abs() / tou_rate;
    Ok((base_load * (1.0 + elasticity * deviation)).clamp(0.0, base_load))
}

pub fn generate_population<R: Rng + ?Sized>(
    cfg: &PopulationConfig,
    offers: &OfferConfig,
    rng: &mut R,
) -> Vec<CustomerProfile> {
    let draw = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    (0..cfg.customers)
        .map(|customer_id| {
            let elasticity = [
                draw(rng, cfg.elasticity_peak),
                draw(rng, cfg.elasticity_semi_peak),
                draw(rng, cfg.elasticity_off_peak),
            ];
            let template = if rng.random::<f64>() < cfg.peaked_fraction {
                LoadTemplate::Peaked
            } else {
                LoadTemplate::Flat
            };
            CustomerProfile {
                customer_id,
                elasticity,
                template,
                load_scale_kw: draw(rng, cfg.load_scale),
                participation_prob: offers.participation_prob,
                offer_center_ratio: offers.center_ratio,
                offer_spread_ratio: offers.spread_ratio,
            }
        })
        .collect()
}

/// Normal draw truncated to `(0, cap]` by rejection; falls back to clamping
/// when the window holds almost no mass.
fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, cap: f64, rng: &mut R) -> f64 {
    if sd <= 0.0 {
        return mean.clamp(f64::MIN_POSITIVE, cap);
    }
    let normal = Normal::new(mean, sd).expect("finite spread");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x > 0.0 && x <= cap {
            return x;
        }
    }
    mean.clamp(f64::MIN_POSITIVE, cap)
}

/// Draws each customer's offer per event slot; zero marks a skipped slot.
pub fn generate_participation_plans<R: Rng + ?Sized>(
    profiles: &[CustomerProfile],
    event: &DbEvent,
    tariff: &TouSchedule,
    price_cap: f64,
    rng: &mut R,
) -> Vec<ParticipationPlan> {
    profiles
        .iter()
        .map(|c| {
            let prices = event
                .slots()
                .map(|slot| {
                    let rate = tariff.rate_at(slot);
                    if rng.random::<f64>() < c.participation_prob {
                        truncated_normal(
                            c.offer_center_ratio * rate,
                            c.offer_spread_ratio * rate,
                            price_cap,
                            rng,
                        )
                    } else {
                        0.0
                    }
                })
                .collect();
            ParticipationPlan { customer_id: c.customer_id, prices }
        })
        .collect()
}

/// Daily reserve-rate profile: a dip around the afternoon peak, a day-level
/// offset and per-slot noise, bounded to `[v_min, v_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReserveModel {
    pub v_min: f64,
    pub v_max: f64,
    pub mean: f64,
    pub dip: f64,
    pub dip_hour: f64,
    pub dip_width_hours: f64,
    pub day_sd: f64,
    pub slot_sd: f64,
}

impl Default for ReserveModel {
    fn default() -> Self {
        Self {
            v_min: 0.03,
            v_max: 0.15,
            mean: 0.11,
            dip: 0.03,
            dip_hour: 15.0,
            dip_width_hours: 3.0,
            day_sd: 0.025,
            slot_sd: 0.005,
        }
    }
}

impl ReserveModel {
    pub fn profile(&self, slot: usize) -> f64 {
        let hour = slot as f64 * 24.0 / SLOTS_PER_DAY as f64;
        self.mean - self.dip * (-((hour - self.dip_hour) / self.dip_width_hours).powi(2)).exp()
    }

    pub fn draw_day_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian(self.day_sd, rng)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, slot: usize, day_offset: f64, rng: &mut R) -> f64 {
        let v = self.profile(slot) + day_offset + gaussian(self.slot_sd, rng);
        v.clamp(self.v_min, self.v_max)
    }

    pub fn daily_series<R: Rng + ?Sized>(&self, event: &DbEvent, rng: &mut R) -> Vec<f64> {
        let offset = self.draw_day_offset(rng);
        event.slots().map(|slot| self.simulate(slot, offset, rng)).collect()
    }
}

fn gaussian<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    } else {
        0.0
    }
}

/// Calendar stamp of a dataset day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayStamp {
    pub index: usize,
    pub day_of_year: u32,
    pub weekend: bool,
}

/// Calendar position of the first dataset day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calendar {
    pub start_day_of_year: u32,
    /// 0 = Monday.
    pub start_weekday: u32,
}

impl Default for Calendar {
    fn default() -> Self {
        Self { start_day_of_year: 152, start_weekday: 0 }
    }
}

impl Calendar {
    pub fn stamp(&self, index: usize) -> DayStamp {
        let day_of_year = (self.start_day_of_year - 1 + index as u32) % 365 + 1;
        let weekday = (self.start_weekday + index as u32) % 7;
        DayStamp { index, day_of_year, weekend: weekday >= 5 }
    }
}

/// Every random quantity of one event day, drawn up front so that the day can
/// be replayed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayScenario {
    pub stamp: DayStamp,
    pub event: DbEvent,
    /// Reserve-rate forecast per event slot.
    pub reserve: Vec<f64>,
    /// Additive clearing-price noise per event slot.
    pub mcp_noise: Vec<f64>,
    pub plans: Vec<ParticipationPlan>,
    /// Customer baseline per customer, constant over the event window.
    pub baseline_kw: Vec<f64>,
    /// Forecast load `[event slot][customer]`.
    pub base_load_kw: Vec<Vec<f64>>,
}

impl DayScenario {
    pub fn offers_at(&self, n: usize) -> Vec<f64> {
        self.plans.iter().map(|p| p.prices[n]).collect()
    }

    pub fn n_slots(&self) -> usize {
        self.event.n_slots
    }
}

/// Everything needed to draw event days.
#[derive(Debug, Clone)]
pub struct DayGenerator<'a> {
    pub event: DbEvent,
    pub mcp: &'a McpModel,
    pub tariff: &'a TouSchedule,
    pub reserve: &'a ReserveModel,
    pub population: &'a [CustomerProfile],
    pub load_jitter: f64,
    pub offer_cap: f64,
    pub calendar: Calendar,
}

impl DayGenerator<'_> {
    pub fn generate<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> DayScenario {
        let jitter = |rng: &mut R| {
            if self.load_jitter > 0.0 {
                rng.random_range(1.0 - self.load_jitter..=1.0 + self.load_jitter)
            } else {
                1.0
            }
        };
        // Baselines from five prior eligible days of the same load model.
        let baseline_kw = self
            .population
            .iter()
            .map(|c| {
                let peak = self.event.slots().map(|s| c.base_load(s)).fold(0.0, f64::max);
                let maxima: Vec<f64> = (0..CBL_HISTORY_DAYS).map(|_| peak * jitter(rng)).collect();
                market::compute_cbl(&maxima).expect("fixed history length")
            })
            .collect();
        let day_factor: Vec<f64> = self.population.iter().map(|_| jitter(rng)).collect();
        let base_load_kw = self
            .event
            .slots()
            .map(|slot| {
                self.population
                    .iter()
                    .zip(&day_factor)
                    .map(|(c, f)| c.base_load(slot) * f)
                    .collect()
            })
            .collect();
        let reserve = self.reserve.daily_series(&self.event, rng);
        let plans = generate_participation_plans(
            self.population,
            &self.event,
            self.tariff,
            self.offer_cap,
            rng,
        );
        let mcp_noise = self.event.slots().map(|_| self.mcp.draw_noise(rng)).collect();
        DayScenario {
            stamp: self.calendar.stamp(index),
            event: self.event,
            reserve,
            mcp_noise,
            plans,
            baseline_kw,
            base_load_kw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_coefficients_at_reference_point() {
        let m = McpModel::default();
        let v = m.clearing_price(40.0, 0.10, 0.0).unwrap();
        assert!((v - 4.263255).abs() < 1e-9, "{v}");
    }

    #[test]
    fn zero_coefficients_give_zero_price() {
        let m = McpModel { coefficients: [0.0; 6], noise_sigma: 0.0 };
        let mut rng = seeded_rng(1, 0);
        for t in [0.0, 40.0, 95.0] {
            assert_eq!(m.simulate(t, 0.07, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn reserve_outside_unit_interval_is_rejected() {
        let m = McpModel::default();
        assert_eq!(m.clearing_price(10.0, 1.2, 0.0), Err(SimError::ReserveOutOfRange(1.2)));
        assert!(m.clearing_price(10.0, -0.01, 0.0).is_err());
    }

    #[test]
    fn negative_polynomial_is_clamped() {
        let m = McpModel { coefficients: [0.0, 0.0, 0.0, 0.0, 0.0, -3.0], noise_sigma: 0.0 };
        assert_eq!(m.clearing_price(0.0, 0.1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn noisy_mean_matches_noiseless_value() {
        let m = McpModel::with_sigma(0.5);
        let exact = m.polynomial(40.0, 0.10);
        let mut rng = seeded_rng(42, 0);
        let n = 10_000;
        let mean = (0..n).map(|_| m.simulate(40.0, 0.10, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - exact).abs() < 3.0 * 0.5 / 100.0, "{mean} vs {exact}");
    }

    #[test]
    fn consumption_inversion() {
        let p = simulate_consumption(100.0, -0.5, 5.0, true, 6.0).unwrap();
        assert!((p - 90.0).abs() < 1e-12);
        assert_eq!(simulate_consumption(100.0, -0.5, 5.0, true, 5.0).unwrap(), 100.0);
        assert_eq!(simulate_consumption(100.0, 0.0, 5.0, true, 9.0).unwrap(), 100.0);
        assert_eq!(simulate_consumption(100.0, -0.5, 5.0, false, 9.0).unwrap(), 100.0);
        // extreme deviation clamps at zero
        assert_eq!(simulate_consumption(100.0, -1.0, 1.0, true, 9.0).unwrap(), 0.0);
        assert_eq!(
            simulate_consumption(100.0, -0.5, 0.0, true, 1.0),
            Err(SimError::NonPositiveTariff(0.0))
        );
    }

    #[test]
    fn population_respects_bands_and_seed() {
        let cfg = PopulationConfig::default();
        let offers = OfferConfig::default();
        let a = generate_population(&cfg, &offers, &mut seeded_rng(9, streams::POPULATION));
        let b = generate_population(&cfg, &offers, &mut seeded_rng(9, streams::POPULATION));
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        for c in &a {
            assert!((-0.4..=0.0).contains(&c.elasticity[0]));
            assert!((-0.6..=-0.4).contains(&c.elasticity[1]));
            assert!((-1.0..=-0.6).contains(&c.elasticity[2]));
            assert!((20.0..=200.0).contains(&c.load_scale_kw));
        }
        let one = generate_population(
            &PopulationConfig { customers: 1, ..cfg },
            &offers,
            &mut seeded_rng(3, 0),
        );
        assert_eq!(one.len(), 1);
        assert!(one[0].elasticity.iter().all(|e| e.is_finite()));
    }

    fn small_population(offers: &OfferConfig) -> Vec<CustomerProfile> {
        generate_population(&PopulationConfig::default(), offers, &mut seeded_rng(5, 0))
    }

    #[test]
    fn plans_respect_participation_probability() {
        let event = DbEvent::default();
        let tariff = TouSchedule::default();
        let none = small_population(&OfferConfig { participation_prob: 0.0, ..Default::default() });
        let plans = generate_participation_plans(&none, &event, &tariff, 10.0, &mut seeded_rng(1, 0));
        assert!(plans.iter().all(|p| p.prices.iter().all(|&x| x == 0.0)));

        let exact = small_population(&OfferConfig {
            participation_prob: 1.0,
            center_ratio: 1.0,
            spread_ratio: 0.0,
            ..Default::default()
        });
        let plans = generate_participation_plans(&exact, &event, &tariff, 10.0, &mut seeded_rng(1, 0));
        for p in &plans {
            for (n, &x) in p.prices.iter().enumerate() {
                assert_eq!(x, tariff.rate_at(event.start_slot + n));
            }
        }
    }

    #[test]
    fn plans_are_reproducible_and_bounded() {
        let event = DbEvent::default();
        let tariff = TouSchedule::default();
        let pop = small_population(&OfferConfig::default());
        let a = generate_participation_plans(&pop, &event, &tariff, 10.0, &mut seeded_rng(8, 2));
        let b = generate_participation_plans(&pop, &event, &tariff, 10.0, &mut seeded_rng(8, 2));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.iter().flat_map(|p| &p.prices).all(|&x| (0.0..=10.0).contains(&x)));
    }

    #[test]
    fn reserve_noise_free_is_profile_and_draws_are_bounded() {
        let quiet = ReserveModel { day_sd: 0.0, slot_sd: 0.0, ..Default::default() };
        let mut rng = seeded_rng(0, 0);
        for slot in 0..SLOTS_PER_DAY {
            let expect = quiet.profile(slot).clamp(quiet.v_min, quiet.v_max);
            assert_eq!(quiet.simulate(slot, 0.0, &mut rng), expect);
        }
        let noisy = ReserveModel { day_sd: 0.2, slot_sd: 0.1, ..Default::default() };
        for i in 0..10_000 {
            let off = noisy.draw_day_offset(&mut rng);
            let v = noisy.simulate(i % SLOTS_PER_DAY, off, &mut rng);
            assert!((noisy.v_min..=noisy.v_max).contains(&v));
        }
        let event = DbEvent::default();
        let m = ReserveModel::default();
        assert_eq!(
            m.daily_series(&event, &mut seeded_rng(4, 1)),
            m.daily_series(&event, &mut seeded_rng(4, 1))
        );
    }

    #[test]
    fn tariff_bands() {
        let t = TouSchedule::default();
        assert_eq!(t.band(56), TariffBand::Peak); // 14:00
        assert_eq!(t.band(40), TariffBand::SemiPeak); // 10:00
        assert_eq!(t.band(68), TariffBand::SemiPeak); // 17:00
        assert_eq!(t.band(4), TariffBand::OffPeak);
        assert_eq!(t.rate_at(60), 5.0);
    }

    #[test]
    fn calendar_wraps_and_flags_weekends() {
        let c = Calendar { start_day_of_year: 364, start_weekday: 4 };
        assert_eq!(c.stamp(0).day_of_year, 364);
        assert_eq!(c.stamp(2).day_of_year, 1);
        assert!(!c.stamp(0).weekend);
        assert!(c.stamp(1).weekend);
        assert!(c.stamp(2).weekend);
        assert!(!c.stamp(3).weekend);
    }
}
