//! Run configuration: scenario, learner and pipeline sections, loaded from
//! TOML. Unknown keys are rejected and every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::BaselineConfig;
use crate::ddpg::AgentConfig;
use crate::env::{ActionBounds, Environment, StateEncoder};
use crate::market::DbEvent;
use crate::sim::{
    generate_population, seeded_rng, streams, Calendar, CustomerProfile, DayGenerator, McpModel,
    OfferConfig, PopulationConfig, ReserveModel, TouSchedule,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Noise level of the three reference scenarios.
pub fn scenario_sigma(scenario: u8) -> Option<f64> {
    match scenario {
        1 => Some(0.0),
        2 => Some(0.2),
        3 => Some(0.5),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub event: DbEvent,
    pub mcp: McpModel,
    pub tariff: TouSchedule,
    pub population: PopulationConfig,
    pub offers: OfferConfig,
    pub reserve: ReserveModel,
    pub calendar: Calendar,
    pub bounds: ActionBounds,
    /// Keep the date feature in the state encoding.
    pub include_date: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            event: DbEvent::default(),
            mcp: McpModel::default(),
            tariff: TouSchedule::default(),
            population: PopulationConfig::default(),
            offers: OfferConfig::default(),
            reserve: ReserveModel::default(),
            calendar: Calendar::default(),
            bounds: ActionBounds::default(),
            include_date: true,
        }
    }
}

impl ScenarioConfig {
    pub fn numbered(scenario: u8) -> Option<Self> {
        let sigma = scenario_sigma(scenario)?;
        let mut s = Self::default();
        s.mcp.noise_sigma = sigma;
        Some(s)
    }

    pub fn encoder(&self) -> StateEncoder {
        StateEncoder {
            customers: self.population.customers,
            price_max: self.bounds.price_max,
            reserve_max: self.reserve.v_max,
            include_date: self.include_date,
        }
    }

    pub fn population(&self, seed: u64) -> Vec<CustomerProfile> {
        generate_population(&self.population, &self.offers, &mut seeded_rng(seed, streams::POPULATION))
    }

    pub fn environment(&self, population: Vec<CustomerProfile>) -> Environment {
        Environment::new(self.mcp.clone(), self.tariff.clone(), population, self.bounds)
    }

    pub fn day_generator<'a>(&'a self, population: &'a [CustomerProfile]) -> DayGenerator<'a> {
        DayGenerator {
            event: self.event,
            mcp: &self.mcp,
            tariff: &self.tariff,
            reserve: &self.reserve,
            population,
            load_jitter: self.population.load_jitter,
            offer_cap: self.offers.price_cap.min(self.bounds.price_max),
            calendar: self.calendar,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        DbEvent::new(self.event.start_slot, self.event.n_slots, self.event.slot_hours)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.event.end_slot() > crate::sim::SLOTS_PER_DAY {
            return bad(format!("event ends at slot {} past the end of the day", self.event.end_slot()));
        }
        if !(self.mcp.noise_sigma >= 0.0 && self.mcp.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {}", self.mcp.noise_sigma));
        }
        if self.population.customers == 0 {
            return bad("population needs at least one customer".into());
        }
        for (name, (lo, hi)) in [
            ("elasticity_peak", self.population.elasticity_peak),
            ("elasticity_semi_peak", self.population.elasticity_semi_peak),
            ("elasticity_off_peak", self.population.elasticity_off_peak),
        ] {
            if lo > hi || lo < -1.0 || hi > 0.0 {
                return bad(format!("{name} range [{lo}, {hi}] must lie in [-1, 0]"));
            }
        }
        let (l0, l1) = self.population.load_scale;
        if !(0.0 <= l0 && l0 <= l1) {
            return bad(format!("load_scale [{l0}, {l1}]"));
        }
        if !(0.0..1.0).contains(&self.population.load_jitter) {
            return bad(format!("load_jitter {}", self.population.load_jitter));
        }
        if !(0.0..=1.0).contains(&self.offers.participation_prob) {
            return bad(format!("participation_prob {}", self.offers.participation_prob));
        }
        if self.offers.spread_ratio < 0.0 || self.offers.center_ratio < 0.0 || self.offers.price_cap <= 0.0 {
            return bad("offer distribution parameters must be non-negative".into());
        }
        for rate in [self.tariff.peak_rate, self.tariff.semi_peak_rate, self.tariff.off_peak_rate] {
            if rate <= 0.0 {
                return bad(format!("tariff rate {rate} must be positive"));
            }
        }
        let r = &self.reserve;
        if !(0.0 <= r.v_min && r.v_min < r.v_max && r.v_max <= 1.0) || r.day_sd < 0.0 || r.slot_sd < 0.0 {
            return bad("reserve bounds must satisfy 0 <= v_min < v_max <= 1".into());
        }
        let b = &self.bounds;
        if !(b.price_min == 0.0 && b.price_max > 0.0 && b.quantity_max > 0.0) {
            return bad("bounds need price_min = 0, positive price_max and quantity_max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Event days in the offline training set.
    pub offline_days: usize,
    pub episodes: usize,
    /// Days for validation-set evaluation during grid search.
    pub validation_days: usize,
    /// Days of act-then-learn online operation.
    pub online_days: usize,
    /// Keep final-level exploration noise while acting online.
    pub online_explore: bool,
    /// Save a checkpoint every this many episodes; 0 disables.
    pub checkpoint_every: usize,
    pub offline_success_threshold: f64,
    pub online_success_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            offline_days: 15,
            episodes: 150,
            validation_days: 15,
            online_days: 5,
            online_explore: false,
            checkpoint_every: 0,
            offline_success_threshold: 0.90,
            online_success_threshold: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub pipeline: PipelineConfig,
    pub baseline: BaselineConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            agent: AgentConfig::default(),
            pipeline: PipelineConfig::default(),
            baseline: BaselineConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        let a = &self.agent;
        if a.hidden.is_empty() || a.hidden.contains(&0) {
            return Err(ConfigError::Invalid("hidden layers must be non-empty and positive".into()));
        }
        if !(0.0..=1.0).contains(&a.gamma) || !(0.0..=1.0).contains(&a.tau) {
            return Err(ConfigError::Invalid("gamma and tau must lie in [0, 1]".into()));
        }
        if a.batch_size == 0 || a.buffer_capacity < a.batch_size {
            return Err(ConfigError::Invalid("need 0 < batch_size <= buffer_capacity".into()));
        }
        if !(a.actor_lr > 0.0 && a.critic_lr > 0.0 && a.reward_scale > 0.0) {
            return Err(ConfigError::Invalid("learning rates and reward_scale must be positive".into()));
        }
        for n in [Some(a.noise), a.quantity_noise].into_iter().flatten() {
            if n.start < 0.0 || n.end < 0.0 || n.end > n.start {
                return Err(ConfigError::Invalid("exploration noise must satisfy 0 <= end <= start".into()));
            }
        }
        let b = &self.baseline;
        if !(b.learning_rate > 0.0) || b.batch_size == 0 || b.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(ConfigError::Invalid("baseline needs a positive learning rate, batch size and layer sizes".into()));
        }
        let p = &self.pipeline;
        for t in [p.offline_success_threshold, p.online_success_threshold] {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering, ignoring the output directory
    /// so that the same run hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml_string().as_bytes()))
    }
}
