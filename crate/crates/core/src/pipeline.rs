//! Experiment protocol: dataset generation, offline training, online
//! act-then-learn operation, frozen-draw evaluation, metrics and grid search.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, BaselineModel};
use crate::config::{RunConfig, ScenarioConfig};
use crate::ddpg::{AgentError, BiddingAgents, JointLearn, LearnOutcome};
use crate::env::{EnvAction, EnvError, EnvState, Environment};
use crate::market::ExecutionRate;
use crate::sim::{seeded_rng, streams, CustomerProfile, DayScenario};

pub const DATASET_VERSION: u32 = 1;
pub const OUTCOME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("metrics need a non-empty outcome log")]
    EmptyLog,
    #[error("grid search needs at least one configuration")]
    EmptyGrid,
    #[error("training diverged at episode {episode}: non-finite {what}")]
    Diverged { episode: usize, what: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported {what} version {found}")]
    Version { what: &'static str, found: u32 },
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

/// Ordered event days with every random draw frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: u32,
    pub seed: u64,
    pub stream: u64,
    pub days: Vec<DayScenario>,
}

impl Dataset {
    /// Days `first_index..first_index + n_days` drawn from one RNG stream.
    pub fn generate(
        scenario: &ScenarioConfig,
        population: &[CustomerProfile],
        n_days: usize,
        first_index: usize,
        seed: u64,
        stream: u64,
    ) -> Self {
        let generator = scenario.day_generator(population);
        let mut rng = seeded_rng(seed, stream);
        let days = (0..n_days).map(|d| generator.generate(first_index + d, &mut rng)).collect();
        Self { version: DATASET_VERSION, seed, stream, days }
    }

    pub fn periods(&self) -> usize {
        self.days.iter().map(|d| d.n_slots()).sum()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let ds: Dataset = serde_json::from_str(&text)?;
        if ds.version != DATASET_VERSION {
            return Err(PipelineError::Version { what: "dataset", found: ds.version });
        }
        Ok(ds)
    }

    /// One row per period with the market-side draws and the offers.
    pub fn write_periods_csv(&self, scenario: &ScenarioConfig, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let customers = self.days.first().map(|d| d.plans.len()).unwrap_or(0);
        let mut header: Vec<String> =
            ["day", "day_of_year", "weekend", "slot", "reserve", "mcp_noise", "mcp"].map(String::from).to_vec();
        header.extend((0..customers).map(|i| format!("offer_{i}")));
        w.write_record(&header)?;
        for day in &self.days {
            for n in 0..day.n_slots() {
                let slot = day.event.start_slot + n;
                let mcp = scenario
                    .mcp
                    .clearing_price(slot as f64, day.reserve[n], day.mcp_noise[n])?;
                let mut rec = vec![
                    day.stamp.index.to_string(),
                    day.stamp.day_of_year.to_string(),
                    (day.stamp.weekend as u8).to_string(),
                    slot.to_string(),
                    day.reserve[n].to_string(),
                    day.mcp_noise[n].to_string(),
                    mcp.to_string(),
                ];
                rec.extend(day.offers_at(n).iter().map(|o| o.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }
}

/// Anything that can place a bid from an observed state.
pub trait BiddingPolicy {
    fn bid(&mut self, state: &EnvState) -> Result<EnvAction>;
    fn label(&self) -> &str;
}

/// Greedy (noise-free) view of trained agents.
pub struct GreedyAgents<'a>(pub &'a BiddingAgents);

impl BiddingPolicy for GreedyAgents<'_> {
    fn bid(&mut self, state: &EnvState) -> Result<EnvAction> {
        Ok(self.0.policy(state)?)
    }
    fn label(&self) -> &str {
        "proposed"
    }
}

/// Never participates.
pub struct NeutralPolicy;

impl BiddingPolicy for NeutralPolicy {
    fn bid(&mut self, _: &EnvState) -> Result<EnvAction> {
        Ok(EnvAction::NEUTRAL)
    }
    fn label(&self) -> &str {
        "neutral"
    }
}

/// One settled period as written to the outcome CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub episode: usize,
    pub day: usize,
    pub slot: usize,
    pub reserve: f64,
    pub mcp: f64,
    pub bid_price: f64,
    pub bid_quantity: f64,
    pub actual_quantity: f64,
    /// `inf` when nothing was shed against a positive bid, `NaN` when both are zero.
    pub execution_rate: f64,
    pub incentive: f64,
    pub win: u8,
    /// Cleared and backed by real curtailment.
    pub deal: u8,
    pub profit: f64,
}

impl OutcomeRow {
    pub fn from_step(episode: usize, day: &DayScenario, n: usize, o: &crate::market::SlotOutcome) -> Self {
        Self {
            episode,
            day: day.stamp.index,
            slot: o.slot,
            reserve: day.reserve[n],
            mcp: o.mcp,
            bid_price: o.bid.price,
            bid_quantity: o.bid.quantity,
            actual_quantity: o.shedding,
            execution_rate: o.execution_rate.as_f64(),
            incentive: o.incentive,
            win: o.win as u8,
            deal: o.deal() as u8,
            profit: o.profit,
        }
    }

    pub fn rate(&self) -> ExecutionRate {
        ExecutionRate::from_f64(self.execution_rate)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLog {
    pub rows: Vec<OutcomeRow>,
}

impl OutcomeLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<OutcomeRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn total_profit(&self) -> f64 {
        self.rows.iter().map(|r| r.profit).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub periods: usize,
    /// Share of periods with positive profit.
    pub success_rate: f64,
    /// Share of periods with execution rate in `[0.8, 1.2]`.
    pub rate_tight: f64,
    /// Share of periods with execution rate in `[0.6, 1.5]`.
    pub rate_loose: f64,
    /// Share of periods flagged as deals.
    pub win_rate: f64,
    pub total_profit: f64,
    /// Summed profit per episode, in episode order.
    pub cumulative_profit: Vec<f64>,
}

pub fn compute_metrics(log: &OutcomeLog) -> Result<RunMetrics> {
    if log.rows.is_empty() {
        return Err(PipelineError::EmptyLog);
    }
    let n = log.rows.len() as f64;
    let share = |f: &dyn Fn(&OutcomeRow) -> bool| log.rows.iter().filter(|r| f(r)).count() as f64 / n;
    let mut cumulative_profit: Vec<f64> = Vec::new();
    let mut current: Option<usize> = None;
    for r in &log.rows {
        if current != Some(r.episode) {
            cumulative_profit.push(0.0);
            current = Some(r.episode);
        }
        *cumulative_profit.last_mut().expect("pushed") += r.profit;
    }
    Ok(RunMetrics {
        periods: log.rows.len(),
        success_rate: share(&|r| r.profit > 0.0),
        rate_tight: share(&|r| r.rate().within(0.8, 1.2)),
        rate_loose: share(&|r| r.rate().within(0.6, 1.5)),
        win_rate: share(&|r| r.deal == 1),
        total_profit: log.total_profit(),
        cumulative_profit,
    })
}

/// Replays a dataset with a fixed policy; no learning.
pub fn evaluate(
    env: &mut Environment,
    dataset: &Dataset,
    policy: &mut dyn BiddingPolicy,
    episode: usize,
) -> Result<OutcomeLog> {
    let mut log = OutcomeLog::default();
    for day in &dataset.days {
        let mut state = env.reset(day.clone())?;
        for n in 0..day.n_slots() {
            let action = policy.bid(&state)?;
            let step = env.step(action)?;
            log.rows.push(OutcomeRow::from_step(episode, day, n, &step.outcome));
            state = step.next_state;
        }
    }
    Ok(log)
}

/// Per-episode training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub cumulative_profit: f64,
    pub success_rate: f64,
    pub price_critic_loss: f64,
    pub quantity_critic_loss: f64,
    pub exploration_scale: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OfflineOptions {
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
}

/// Explicit RNG streams for one training run.
pub struct TrainRngs<R> {
    pub exploration: R,
    pub replay: R,
}

impl TrainRngs<rand_chacha::ChaCha8Rng> {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            exploration: seeded_rng(seed, streams::EXPLORATION),
            replay: seeded_rng(seed, streams::REPLAY),
        }
    }
}

fn loss_of(o: LearnOutcome) -> Option<f64> {
    match o {
        LearnOutcome::Updated(d) => Some(d.critic_loss),
        LearnOutcome::Skipped { .. } => None,
    }
}

/// Runs one day with exploration, storing every transition and learning
/// once per step after the step is settled.
fn train_day<R: Rng>(
    env: &mut Environment,
    agents: &mut BiddingAgents,
    day: &DayScenario,
    rngs: &mut TrainRngs<R>,
    learn: bool,
    explore: bool,
    episode: usize,
    log: &mut OutcomeLog,
    losses: &mut [Vec<f64>; 2],
) -> Result<()> {
    let mut state = env.reset(day.clone())?;
    for n in 0..day.n_slots() {
        // The clearing price of period n is only drawn inside `step`, after
        // the action is fixed; the cursor checks pin that ordering.
        assert_eq!(env.cursor(), n, "acting out of order");
        let action = agents.act(&state, explore, &mut rngs.exploration)?;
        let step = env.step(action)?;
        assert_eq!(env.cursor(), n + 1, "period settled out of order");
        log.rows.push(OutcomeRow::from_step(episode, day, n, &step.outcome));
        agents.observe(&state, step.outcome.bid.into(), step.reward, &step.next_state, step.terminal);
        if learn {
            let JointLearn { price, quantity } = agents.learn(&mut rngs.replay)?;
            for (i, l) in [price, quantity].into_iter().enumerate() {
                if let Some(v) = loss_of(l) {
                    if !v.is_finite() {
                        return Err(PipelineError::Diverged { episode, what: "critic loss".into() });
                    }
                    losses[i].push(v);
                }
            }
        }
        state = step.next_state;
    }
    Ok(())
}

impl From<crate::market::Bid> for EnvAction {
    fn from(b: crate::market::Bid) -> Self {
        EnvAction { price: b.price, quantity: b.quantity }
    }
}

/// Offline training: each episode is one pass over the dataset. On
/// divergence the agents are restored to the last finished episode and, when
/// a checkpoint directory is set, saved there before the error is returned.
pub fn train_offline<R: Rng>(
    env: &mut Environment,
    agents: &mut BiddingAgents,
    dataset: &Dataset,
    episodes: usize,
    rngs: &mut TrainRngs<R>,
    options: &OfflineOptions,
) -> Result<(Vec<EpisodeSummary>, OutcomeLog)> {
    let mut curve = Vec::with_capacity(episodes);
    let mut full_log = OutcomeLog::default();
    let mut last_good = agents.clone();
    for episode in 0..episodes {
        let mut log = OutcomeLog::default();
        let mut losses = [Vec::new(), Vec::new()];
        let scale = agents.price.noise.scale();
        let mut run = || -> Result<()> {
            for day in &dataset.days {
                train_day(env, agents, day, rngs, true, true, episode, &mut log, &mut losses)?;
            }
            if !agents.is_finite() {
                return Err(PipelineError::Diverged { episode, what: "network parameters".into() });
            }
            Ok(())
        };
        if let Err(e) = run() {
            *agents = last_good;
            if let Some(dir) = &options.checkpoint_dir {
                agents.save(&dir.join("last_good"))?;
            }
            return Err(e);
        }
        let m = compute_metrics(&log)?;
        let mean = |v: &Vec<f64>| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        curve.push(EpisodeSummary {
            episode,
            cumulative_profit: m.total_profit,
            success_rate: m.success_rate,
            price_critic_loss: mean(&losses[0]),
            quantity_critic_loss: mean(&losses[1]),
            exploration_scale: scale,
        });
        log::debug!("episode {episode}: profit {:.2} success {:.3}", m.total_profit, m.success_rate);
        full_log.rows.extend(log.rows);
        if let Some(dir) = &options.checkpoint_dir {
            if options.checkpoint_every > 0 && (episode + 1) % options.checkpoint_every == 0 {
                agents.save(&dir.join(format!("episode_{:04}", episode + 1)))?;
            }
        }
        last_good = agents.clone();
    }
    Ok((curve, full_log))
}

/// Online operation over a dataset: for each period the agents act first,
/// the period is settled and logged, and only then is the experience stored
/// and learned from. Acting is greedy unless `explore` is set, in which case
/// the exploration schedule is held at its final value.
pub fn train_online<R: Rng>(
    env: &mut Environment,
    agents: &mut BiddingAgents,
    dataset: &Dataset,
    learn: bool,
    explore: bool,
    rngs: &mut TrainRngs<R>,
) -> Result<(OutcomeLog, RunMetrics)> {
    agents.anneal_exploration();
    let mut log = OutcomeLog::default();
    let mut losses = [Vec::new(), Vec::new()];
    let explore = learn && explore;
    for day in &dataset.days {
        train_day(env, agents, day, rngs, learn, explore, 0, &mut log, &mut losses)?;
    }
    let metrics = compute_metrics(&log)?;
    Ok((log, metrics))
}

pub fn write_curve_csv(curve: &[EpisodeSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in curve {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Spread of the last `window` episodes relative to the whole curve's
/// peak-to-trough range. The spread is the standard deviation so both sides
/// share the curve's unit. `None` unless the window lies entirely after
/// episode `after`.
pub fn tail_stability(curve: &[f64], after: usize, window: usize) -> Option<f64> {
    if window < 2 || curve.len() < after + window {
        return None;
    }
    let last = &curve[curve.len() - window..];
    let mean = last.iter().sum::<f64>() / window as f64;
    let var = last.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64;
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi - lo <= 0.0 {
        return Some(0.0);
    }
    Some(var.sqrt() / (hi - lo))
}

/// Everything produced by an offline run.
pub struct OfflineRun {
    pub population: Vec<CustomerProfile>,
    pub dataset: Dataset,
    pub agents: BiddingAgents,
    pub curve: Vec<EpisodeSummary>,
    pub training_log: OutcomeLog,
    /// Greedy replay of the training dataset.
    pub evaluation_log: OutcomeLog,
    pub metrics: RunMetrics,
}

/// Fresh agents for `cfg`; schedules without an explicit decay length span
/// `total_steps` actions.
pub fn build_agents(cfg: &RunConfig, total_steps: u64) -> BiddingAgents {
    let mut agent_cfg = cfg.agent.clone();
    agent_cfg.resolve_decay_steps(total_steps.max(1));
    BiddingAgents::new(
        cfg.scenario.encoder(),
        &cfg.scenario.bounds,
        agent_cfg,
        &mut seeded_rng(cfg.pipeline.seed, streams::AGENT_INIT),
    )
}

pub fn training_dataset(cfg: &RunConfig, population: &[CustomerProfile]) -> Dataset {
    Dataset::generate(&cfg.scenario, population, cfg.pipeline.offline_days, 0, cfg.pipeline.seed, streams::DATASET)
}

/// Unseen days following the training days, for grid-search gating.
pub fn validation_dataset(cfg: &RunConfig, population: &[CustomerProfile]) -> Dataset {
    Dataset::generate(
        &cfg.scenario,
        population,
        cfg.pipeline.validation_days,
        cfg.pipeline.offline_days,
        cfg.pipeline.seed,
        streams::VALIDATION,
    )
}

/// Days operated online, following the training days.
pub fn online_dataset(cfg: &RunConfig, population: &[CustomerProfile]) -> Dataset {
    Dataset::generate(
        &cfg.scenario,
        population,
        cfg.pipeline.online_days,
        cfg.pipeline.offline_days,
        cfg.pipeline.seed,
        streams::ONLINE,
    )
}

pub fn run_offline(cfg: &RunConfig, options: &OfflineOptions) -> Result<OfflineRun> {
    let population = cfg.scenario.population(cfg.pipeline.seed);
    let dataset = training_dataset(cfg, &population);
    run_offline_on(cfg, population, dataset, options)
}

pub fn run_offline_on(
    cfg: &RunConfig,
    population: Vec<CustomerProfile>,
    dataset: Dataset,
    options: &OfflineOptions,
) -> Result<OfflineRun> {
    let mut env = cfg.scenario.environment(population.clone());
    let mut agents = build_agents(cfg, (cfg.pipeline.episodes * dataset.periods()) as u64);
    let mut rngs = TrainRngs::from_seed(cfg.pipeline.seed);
    let (curve, training_log) =
        train_offline(&mut env, &mut agents, &dataset, cfg.pipeline.episodes, &mut rngs, options)?;
    let evaluation_log = evaluate(&mut env, &dataset, &mut GreedyAgents(&agents), 0)?;
    let metrics = compute_metrics(&evaluation_log)?;
    Ok(OfflineRun { population, dataset, agents, curve, training_log, evaluation_log, metrics })
}

/// Online operation and the baseline replayed on the same frozen days.
pub struct OnlineRun {
    pub online_dataset: Dataset,
    pub online_log: OutcomeLog,
    pub online_metrics: RunMetrics,
    pub baseline: BaselineModel,
    pub baseline_log: OutcomeLog,
    pub baseline_metrics: RunMetrics,
}

/// Runs pretrained `agents` online over the days after `history`, learning
/// as it goes, and fits the baseline on `history` for comparison.
pub fn run_online(
    cfg: &RunConfig,
    agents: &mut BiddingAgents,
    population: &[CustomerProfile],
    history: &Dataset,
    learn: bool,
) -> Result<OnlineRun> {
    let online = online_dataset(cfg, population);
    let mut env = cfg.scenario.environment(population.to_vec());
    let mut rngs = TrainRngs {
        exploration: seeded_rng(cfg.pipeline.seed, streams::ONLINE_EXPLORATION),
        replay: seeded_rng(cfg.pipeline.seed, streams::ONLINE_REPLAY),
    };
    let (online_log, online_metrics) =
        train_online(&mut env, agents, &online, learn, cfg.pipeline.online_explore, &mut rngs)?;
    let baseline = fit_baseline_on(cfg, &mut env, history)?;
    let baseline_log = evaluate(&mut env, &online, &mut baseline.policy(cfg.scenario.bounds), 0)?;
    let baseline_metrics = compute_metrics(&baseline_log)?;
    Ok(OnlineRun { online_dataset: online, online_log, online_metrics, baseline, baseline_log, baseline_metrics })
}

pub fn fit_baseline_on(cfg: &RunConfig, env: &mut Environment, history: &Dataset) -> Result<BaselineModel> {
    let samples = baseline::historical_samples(env, &cfg.scenario, history)?;
    baseline::fit_baseline(&samples, cfg, &cfg.baseline, &mut seeded_rng(cfg.pipeline.seed, streams::BASELINE))
}

/// Trains on the training days and scores the greedy policy on the
/// validation days; the grid-search objective.
pub fn validation_metrics(cfg: &RunConfig) -> Result<RunMetrics> {
    let run = run_offline(cfg, &OfflineOptions::default())?;
    let validation = validation_dataset(cfg, &run.population);
    let mut env = cfg.scenario.environment(run.population.clone());
    compute_metrics(&evaluate(&mut env, &validation, &mut GreedyAgents(&run.agents), 0)?)
}

/// Axes of a hyperparameter grid; empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperGrid {
    pub actor_lr: Vec<f64>,
    pub critic_lr: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub hidden: Vec<Vec<usize>>,
    pub reward_scale: Vec<f64>,
    pub noise_start: Vec<f64>,
    pub episodes: Vec<usize>,
}

impl HyperGrid {
    /// Cartesian product in lexicographic axis order.
    pub fn expand(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let mut out = vec![(String::new(), base.clone())];
        fn axis<T: Clone + std::fmt::Debug>(
            out: Vec<(String, RunConfig)>,
            name: &str,
            values: &[T],
            set: impl Fn(&mut RunConfig, &T),
        ) -> Vec<(String, RunConfig)> {
            if values.is_empty() {
                return out;
            }
            let set = &set;
            out.into_iter()
                .flat_map(|(label, cfg)| {
                    values.iter().map(move |v| {
                        let mut c = cfg.clone();
                        set(&mut c, v);
                        let sep = if label.is_empty() { "" } else { "," };
                        (format!("{label}{sep}{name}={v:?}"), c)
                    }).collect::<Vec<_>>()
                })
                .collect()
        }
        out = axis(out, "actor_lr", &self.actor_lr, |c, v| c.agent.actor_lr = *v);
        out = axis(out, "critic_lr", &self.critic_lr, |c, v| c.agent.critic_lr = *v);
        out = axis(out, "gamma", &self.gamma, |c, v| c.agent.gamma = *v);
        out = axis(out, "tau", &self.tau, |c, v| c.agent.tau = *v);
        out = axis(out, "batch_size", &self.batch_size, |c, v| c.agent.batch_size = *v);
        out = axis(out, "hidden", &self.hidden, |c, v| c.agent.hidden = v.clone());
        out = axis(out, "reward_scale", &self.reward_scale, |c, v| c.agent.reward_scale = *v);
        out = axis(out, "noise_start", &self.noise_start, |c, v| c.agent.noise.start = *v);
        out = axis(out, "episodes", &self.episodes, |c, v| c.pipeline.episodes = *v);
        for (label, _) in out.iter_mut() {
            if label.is_empty() {
                *label = "base".into();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub index: usize,
    pub label: String,
    pub metrics: RunMetrics,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridOutcome {
    Selected { best: usize, candidates: Vec<GridCandidate> },
    NoQualifying { candidates: Vec<GridCandidate> },
}

impl GridOutcome {
    pub fn candidates(&self) -> &[GridCandidate] {
        match self {
            GridOutcome::Selected { candidates, .. } | GridOutcome::NoQualifying { candidates } => candidates,
        }
    }

    pub fn best(&self) -> Option<&GridCandidate> {
        match self {
            GridOutcome::Selected { best, candidates } => candidates.iter().find(|c| c.index == *best),
            GridOutcome::NoQualifying { .. } => None,
        }
    }
}

/// Evaluates every grid point (in parallel). The success `threshold` is a
/// pass/fail gate; among accepted points the highest total profit wins, then
/// the earliest grid position.
pub fn grid_search<F>(grid: &[(String, RunConfig)], threshold: f64, eval: F) -> Result<GridOutcome>
where
    F: Fn(&RunConfig) -> Result<RunMetrics> + Sync,
{
    if grid.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    let results: Vec<Result<GridCandidate>> = grid
        .par_iter()
        .enumerate()
        .map(|(index, (label, cfg))| {
            let metrics = eval(cfg)?;
            Ok(GridCandidate { index, label: label.clone(), accepted: metrics.success_rate >= threshold, metrics })
        })
        .collect();
    let candidates = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best = candidates
        .iter()
        .filter(|c| c.accepted)
        .min_by(|a, b| b.metrics.total_profit.total_cmp(&a.metrics.total_profit).then(a.index.cmp(&b.index)))
        .map(|c| c.index);
    Ok(match best {
        Some(best) => GridOutcome::Selected { best, candidates },
        None => GridOutcome::NoQualifying { candidates },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(episode: usize, xi: f64, profit: f64, deal: u8) -> OutcomeRow {
        OutcomeRow {
            episode,
            day: 0,
            slot: 56,
            reserve: 0.1,
            mcp: 4.0,
            bid_price: 3.0,
            bid_quantity: 10.0,
            actual_quantity: 10.0,
            execution_rate: xi,
            incentive: 1.0,
            win: deal,
            deal,
            profit,
        }
    }

    #[test]
    fn bracket_rates_by_hand() {
        let log = OutcomeLog {
            rows: vec![row(0, 1.0, 1.0, 1), row(0, 0.7, 1.0, 1), row(0, 1.3, 1.0, 1), row(0, 2.0, 1.0, 1)],
        };
        let m = compute_metrics(&log).unwrap();
        assert_eq!(m.rate_tight, 0.25);
        assert_eq!(m.rate_loose, 0.75);
        assert_eq!(m.success_rate, 1.0);
    }

    #[test]
    fn zero_wins_mean_zero_success() {
        let log = OutcomeLog { rows: vec![row(0, f64::INFINITY, 0.0, 0); 5] };
        let m = compute_metrics(&log).unwrap();
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.win_rate, 0.0);
        assert_eq!(m.total_profit, 0.0);
        assert_eq!(m.rate_loose, 0.0);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(compute_metrics(&OutcomeLog::default()), Err(PipelineError::EmptyLog)));
    }

    #[test]
    fn cumulative_profit_groups_by_episode() {
        let log = OutcomeLog { rows: vec![row(0, 1.0, 1.5, 1), row(0, 1.0, 2.0, 1), row(1, 1.0, -0.5, 1)] };
        assert_eq!(compute_metrics(&log).unwrap().cumulative_profit, vec![3.5, -0.5]);
    }

    fn metrics(success: f64, profit: f64) -> RunMetrics {
        RunMetrics {
            periods: 10,
            success_rate: success,
            rate_tight: 0.0,
            rate_loose: 0.0,
            win_rate: success,
            total_profit: profit,
            cumulative_profit: vec![profit],
        }
    }

    fn grid_of(points: &[(f64, f64)]) -> Vec<(String, RunConfig)> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(s, p))| {
                let mut c = RunConfig::default();
                c.agent.actor_lr = s;
                c.agent.critic_lr = p;
                (format!("p{i}"), c)
            })
            .collect()
    }

    fn eval_from_lr(c: &RunConfig) -> Result<RunMetrics> {
        Ok(metrics(c.agent.actor_lr, c.agent.critic_lr))
    }

    #[test]
    fn grid_single_point() {
        let g = grid_of(&[(0.95, 10.0)]);
        let out = grid_search(&g, 0.9, eval_from_lr).unwrap();
        assert_eq!(out.best().unwrap().index, 0);
        assert_eq!(out.best().unwrap().metrics.total_profit, 10.0);
    }

    #[test]
    fn grid_never_selects_dominated_point() {
        let g = grid_of(&[(0.91, 5.0), (0.97, 20.0), (0.95, 18.0)]);
        let out = grid_search(&g, 0.9, eval_from_lr).unwrap();
        assert_ne!(out.best().unwrap().index, 0);
        assert_eq!(out.best().unwrap().index, 1);
        // the threshold is a gate: accepted points compete on profit, then order
        let g = grid_of(&[(0.99, 5.0), (0.91, 8.0), (0.95, 8.0), (0.5, 50.0)]);
        assert_eq!(grid_search(&g, 0.9, eval_from_lr).unwrap().best().unwrap().index, 1);
    }

    #[test]
    fn grid_reports_no_qualifying_configuration() {
        let g = grid_of(&[(0.5, 5.0), (0.6, 8.0)]);
        let out = grid_search(&g, 0.9, eval_from_lr).unwrap();
        assert!(matches!(out, GridOutcome::NoQualifying { .. }));
        assert_eq!(out.candidates().len(), 2);
        assert!(matches!(grid_search(&[], 0.9, eval_from_lr), Err(PipelineError::EmptyGrid)));
    }

    #[test]
    fn grid_expansion_is_lexicographic() {
        let grid = HyperGrid { actor_lr: vec![1e-4, 1e-3], gamma: vec![0.0, 0.9], ..Default::default() };
        let pts = grid.expand(&RunConfig::default());
        let labels: Vec<&str> = pts.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "actor_lr=0.0001,gamma=0.0",
                "actor_lr=0.0001,gamma=0.9",
                "actor_lr=0.001,gamma=0.0",
                "actor_lr=0.001,gamma=0.9"
            ]
        );
        assert_eq!(pts[3].1.agent.gamma, 0.9);
        assert_eq!(HyperGrid::default().expand(&RunConfig::default())[0].0, "base");
    }

    #[test]
    fn stability_measure() {
        let flat: Vec<f64> = (0..50).map(|i| if i < 10 { i as f64 } else { 10.0 }).collect();
        assert_eq!(tail_stability(&flat, 20, 20), Some(0.0));
        assert_eq!(tail_stability(&flat[..10], 20, 20), None);
        assert_eq!(tail_stability(&flat[..39], 20, 20), None);
        // alternating 0/2 tail: sd 1 over a 0..10 range
        let wobble: Vec<f64> = (0..40).map(|i| if i < 20 { 10.0 * (i == 5) as u8 as f64 } else { 2.0 * (i % 2) as f64 }).collect();
        assert_eq!(tail_stability(&wobble, 20, 20), Some(0.1));
    }
}
