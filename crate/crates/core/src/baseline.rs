//! Supervised baseline: one regressor predicts the clearing price from
//! (slot, weekend, reserve), another predicts the achievable curtailment from
//! (slot, weekend, offers). Both are fitted on historical days replayed with
//! the bid priced at the realized clearing price.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScenarioConfig};
use crate::env::{ActionBounds, EnvAction, EnvState, Environment};
use crate::nn::{Activation, AdamConfig, DenseNetwork, NetworkSpec, OptimizerState};
use crate::pipeline::{BiddingPolicy, Dataset, PipelineError, Result};
use crate::sim::SLOTS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Hidden sizes; `None` reuses the agents' architecture.
    pub hidden: Option<Vec<usize>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { epochs: 200, learning_rate: 1e-3, batch_size: 64, hidden: None }
    }
}

/// One historical period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    pub slot: usize,
    pub weekend: bool,
    pub reserve: f64,
    pub offers: Vec<f64>,
    pub mcp: f64,
    /// Curtailment delivered when bidding exactly the clearing price.
    pub achievable_kw: f64,
}

/// Replays `dataset` bidding the realized clearing price with zero quantity
/// to read off the curtailment that price would have bought.
pub fn historical_samples(
    env: &mut Environment,
    scenario: &ScenarioConfig,
    dataset: &Dataset,
) -> Result<Vec<BaselineSample>> {
    let mut out = Vec::with_capacity(dataset.periods());
    for day in &dataset.days {
        let mut state = env.reset(day.clone())?;
        for n in 0..day.n_slots() {
            let mcp = scenario.mcp.clearing_price(state.slot as f64, day.reserve[n], day.mcp_noise[n])?;
            let step = env.step(EnvAction { price: mcp.min(scenario.bounds.price_max), quantity: 0.0 })?;
            out.push(BaselineSample {
                slot: state.slot,
                weekend: state.weekend,
                reserve: state.reserve,
                offers: state.offers.clone(),
                mcp,
                achievable_kw: step.outcome.shedding,
            });
            state = step.next_state;
        }
    }
    Ok(out)
}

/// Shared feature scaling so fitting and prediction see identical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub price_max: f64,
    pub reserve_max: f64,
    pub quantity_max: f64,
}

impl FeatureScale {
    fn time(slot: usize) -> f64 {
        slot as f64 / (SLOTS_PER_DAY - 1) as f64
    }

    pub fn price_features(&self, slot: usize, weekend: bool, reserve: f64) -> Vec<f64> {
        vec![Self::time(slot), weekend as u8 as f64, reserve / self.reserve_max]
    }

    pub fn quantity_features(&self, slot: usize, weekend: bool, offers: &[f64]) -> Vec<f64> {
        let mut x = vec![Self::time(slot), weekend as u8 as f64];
        x.extend(offers.iter().map(|o| o / self.price_max));
        x
    }
}

/// A fitted regressor, or the constant it collapsed to.
#[derive(Debug, Clone)]
pub enum Regressor {
    Network { net: DenseNetwork, final_loss: f64 },
    /// Every training target was equal; the network is skipped.
    Constant(f64),
}

impl Regressor {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Regressor::Network { net, .. } => Ok(net.forward(x)?[0]),
            Regressor::Constant(c) => Ok(*c),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Regressor::Constant(_))
    }

    pub fn final_loss(&self) -> f64 {
        match self {
            Regressor::Network { final_loss, .. } => *final_loss,
            Regressor::Constant(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub scale: FeatureScale,
    /// Predicts price / price_max.
    pub price: Regressor,
    /// Predicts quantity / quantity_max.
    pub quantity: Regressor,
}

impl BaselineModel {
    /// Bid for one state, clipped to the action bounds.
    pub fn bid(&self, state: &EnvState, bounds: &ActionBounds) -> Result<EnvAction> {
        let p = self.price.predict(&self.scale.price_features(state.slot, state.weekend, state.reserve))?;
        let q = self.quantity.predict(&self.scale.quantity_features(state.slot, state.weekend, &state.offers))?;
        let raw = EnvAction { price: p * self.scale.price_max, quantity: q * self.scale.quantity_max };
        Ok(bounds.clip(raw).0)
    }

    pub fn policy(&self, bounds: ActionBounds) -> BaselinePolicy<'_> {
        BaselinePolicy { model: self, bounds }
    }
}

pub struct BaselinePolicy<'a> {
    model: &'a BaselineModel,
    bounds: ActionBounds,
}

impl BiddingPolicy for BaselinePolicy<'_> {
    fn bid(&mut self, state: &EnvState) -> Result<EnvAction> {
        self.model.bid(state, &self.bounds)
    }
    fn label(&self) -> &str {
        "baseline"
    }
}

fn fit_regressor<R: Rng>(
    xs: &[Vec<f64>],
    ys: &[f64],
    hidden: &[usize],
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<Regressor> {
    let first = ys[0];
    if ys.iter().all(|&y| (y - first).abs() <= 1e-12) {
        log::warn!("baseline target is constant ({first}); using a constant predictor");
        return Ok(Regressor::Constant(first));
    }
    let spec = NetworkSpec {
        input: xs[0].len(),
        hidden: hidden.to_vec(),
        output: 1,
        hidden_activation: Activation::Relu,
        output_activation: Activation::Identity,
        final_layer_scale: None,
    };
    let mut net = DenseNetwork::new(&spec, rng);
    let mut opt = OptimizerState::new(&net, AdamConfig::with_lr(cfg.learning_rate));
    let mut order: Vec<usize> = (0..ys.len()).collect();
    let width = xs[0].len();
    let mut final_loss = f64::NAN;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let n = chunk.len() as f64;
            let x = Array2::from_shape_fn((chunk.len(), width), |(i, j)| xs[chunk[i]][j]);
            let cache = net.forward_batch(&x)?;
            let out = cache.output();
            let upstream = Array2::from_shape_fn((chunk.len(), 1), |(i, _)| {
                let err = out[[i, 0]] - ys[chunk[i]];
                total += err * err;
                2.0 * err / n
            });
            let (grads, _) = net.backward(&cache, &upstream)?;
            opt.step(&mut net, &grads)?;
        }
        final_loss = total / ys.len() as f64;
        if !final_loss.is_finite() {
            return Err(PipelineError::Other("baseline regression diverged".into()));
        }
    }
    Ok(Regressor::Network { net, final_loss })
}

/// Fits both regressors with MSE and Adam.
pub fn fit_baseline<R: Rng>(
    samples: &[BaselineSample],
    run: &RunConfig,
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<BaselineModel> {
    if samples.is_empty() {
        return Err(PipelineError::Other("baseline needs at least one historical sample".into()));
    }
    let scale = FeatureScale {
        price_max: run.scenario.bounds.price_max,
        reserve_max: run.scenario.reserve.v_max,
        quantity_max: run.scenario.bounds.quantity_max,
    };
    let hidden = cfg.hidden.clone().unwrap_or_else(|| run.agent.hidden.clone());
    let px: Vec<Vec<f64>> = samples.iter().map(|s| scale.price_features(s.slot, s.weekend, s.reserve)).collect();
    let py: Vec<f64> = samples.iter().map(|s| s.mcp / scale.price_max).collect();
    let qx: Vec<Vec<f64>> =
        samples.iter().map(|s| scale.quantity_features(s.slot, s.weekend, &s.offers)).collect();
    let qy: Vec<f64> = samples.iter().map(|s| s.achievable_kw / scale.quantity_max).collect();
    let price = fit_regressor(&px, &py, &hidden, cfg, rng)?;
    let quantity = fit_regressor(&qx, &qy, &hidden, cfg, rng)?;
    Ok(BaselineModel { scale, price, quantity })
}
