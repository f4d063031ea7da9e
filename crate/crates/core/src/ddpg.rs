//! Two-agent deep deterministic policy gradient.
//!
//! The price agent and the quantity agent are independent actor-critic
//! learners over one scalar action each. They observe the same encoded state
//! and are trained on the same reward; each critic only sees its own action.
//! Actions are kept in the actor's normalized `[-1, 1]` space inside the
//! learner and mapped to physical units at the boundary.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionBounds, EnvAction, EnvState, StateEncoder};
use crate::nn::{Activation, AdamConfig, DenseNetwork, NetworkSpec, NnError, OptimizerState};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad agent checkpoint: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Price,
    Quantity,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Price => "price",
            AgentRole::Quantity => "quantity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// The agent's own action, normalized to `[-1, 1]`.
    pub action: f64,
    /// Scaled reward as seen by the learner.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Oldest-first view of the stored transitions.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform draws with replacement; `None` when the buffer is empty.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if self.items.is_empty() {
            return None;
        }
        Some((0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let width = self.items.first().map(|t| t.state.len()).unwrap_or(0);
        w.write_all(b"DRBRPL\0\0")?;
        for v in [self.capacity as u64, self.items.len() as u64, width as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for t in self.iter_chronological() {
            for v in t.state.iter().chain([t.action, t.reward].iter()).chain(t.next_state.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[t.terminal as u8])?;
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self, AgentError> {
        let bad = |m: &str| AgentError::BadCheckpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("replay header"))?;
        if &magic != b"DRBRPL\0\0" {
            return Err(bad("replay magic"));
        }
        let mut u = [0u64; 3];
        for v in u.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("replay header"))?;
            *v = u64::from_le_bytes(b);
        }
        let [capacity, len, width] = u.map(|v| v as usize);
        if capacity == 0 || len > capacity {
            return Err(bad("replay sizes"));
        }
        let mut buf = ReplayBuffer::new(capacity);
        let mut row = vec![0u8; (2 * width + 2) * 8 + 1];
        for _ in 0..len {
            r.read_exact(&mut row).map_err(|_| bad("truncated replay"))?;
            let f: Vec<f64> = row[..row.len() - 1]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            buf.push(Transition {
                state: f[..width].to_vec(),
                action: f[width],
                reward: f[width + 1],
                next_state: f[width + 2..].to_vec(),
                terminal: row[row.len() - 1] != 0,
            });
        }
        Ok(buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    Gaussian,
    OrnsteinUhlenbeck { theta: f64 },
}

/// Exploration noise scale as a fraction of the action range, decaying
/// linearly from `start` to `end` over `decay_steps` actions. A zero
/// `decay_steps` asks the training pipeline to span the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: NoiseKind::Gaussian, start: 0.2, end: 0.02, decay_steps: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcess {
    pub config: NoiseConfig,
    steps: u64,
    ou_state: f64,
}

impl NoiseProcess {
    pub fn new(config: NoiseConfig) -> Self {
        Self { config, steps: 0, ou_state: 0.0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Current standard deviation as a fraction of the action range.
    pub fn scale(&self) -> f64 {
        let NoiseConfig { start, end, decay_steps, .. } = self.config;
        if decay_steps == 0 || self.steps >= decay_steps {
            return end.max(0.0);
        }
        let frac = self.steps as f64 / decay_steps as f64;
        (start + (end - start) * frac).max(0.0)
    }

    /// Jumps the schedule to its final value.
    pub fn anneal(&mut self) {
        self.steps = self.steps.max(self.config.decay_steps);
    }

    /// Noise in normalized action units (range width 2), advancing the schedule.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let sd = 2.0 * self.scale();
        self.steps += 1;
        if sd <= 0.0 {
            return 0.0;
        }
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        match self.config.kind {
            NoiseKind::Gaussian => sd * z,
            NoiseKind::OrnsteinUhlenbeck { theta } => {
                self.ou_state += -theta * self.ou_state + sd * z;
                self.ou_state
            }
        }
    }
}

/// Learner hyperparameters shared by both agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Gradient updates per environment step.
    pub updates_per_step: usize,
    pub buffer_capacity: usize,
    pub noise: NoiseConfig,
    /// Separate schedule for the quantity agent; `None` shares `noise`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantity_noise: Option<NoiseConfig>,
    /// Actor penalty on the squared normalized action, keeping the squashed
    /// output away from saturation.
    pub action_l2: f64,
    /// Separate penalty for the quantity agent; `None` shares `action_l2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantity_action_l2: Option<f64>,
    /// Uniform init half-width of each actor's output layer.
    pub actor_final_init: f64,
    /// Rewards are divided by this before they reach the learner.
    pub reward_scale: f64,
}

impl AgentConfig {
    pub fn noise_for(&self, role: AgentRole) -> NoiseConfig {
        match role {
            AgentRole::Price => self.noise,
            AgentRole::Quantity => self.quantity_noise.unwrap_or(self.noise),
        }
    }

    pub fn action_l2_for(&self, role: AgentRole) -> f64 {
        match role {
            AgentRole::Price => self.action_l2,
            AgentRole::Quantity => self.quantity_action_l2.unwrap_or(self.action_l2),
        }
    }

    /// Gives every schedule left at zero decay steps the length `steps`.
    pub fn resolve_decay_steps(&mut self, steps: u64) {
        for n in [Some(&mut self.noise), self.quantity_noise.as_mut()].into_iter().flatten() {
            if n.decay_steps == 0 {
                n.decay_steps = steps;
            }
        }
    }
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![300, 600, 400, 200],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 64,
            updates_per_step: 1,
            buffer_capacity: 100_000,
            noise: NoiseConfig::default(),
            quantity_noise: None,
            action_l2: 0.0,
            quantity_action_l2: None,
            actor_final_init: 3e-3,
            reward_scale: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnDiagnostics {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnOutcome {
    /// Fewer stored transitions than the batch size.
    Skipped { buffer_len: usize },
    Updated(LearnDiagnostics),
}

/// One actor-critic learner over a scalar action in `[low, high]`.
#[derive(Debug, Clone)]
pub struct Agent {
    pub role: AgentRole,
    pub low: f64,
    pub high: f64,
    pub actor: DenseNetwork,
    pub critic: DenseNetwork,
    pub target_actor: DenseNetwork,
    pub target_critic: DenseNetwork,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub buffer: ReplayBuffer,
    pub noise: NoiseProcess,
    pub learn_steps: u64,
    /// Weight of the squared normalized action added to the actor loss.
    pub action_l2: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        role: AgentRole,
        state_len: usize,
        (low, high): (f64, f64),
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Self {
        let actor_spec = NetworkSpec {
            input: state_len,
            hidden: cfg.hidden.clone(),
            output: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Tanh,
            final_layer_scale: Some(cfg.actor_final_init),
        };
        let critic_spec = NetworkSpec {
            input: state_len + 1,
            output_activation: Activation::Identity,
            final_layer_scale: None,
            ..actor_spec.clone()
        };
        let actor = DenseNetwork::new(&actor_spec, rng);
        let critic = DenseNetwork::new(&critic_spec, rng);
        Self::from_networks(role, (low, high), actor, critic, cfg)
    }

    pub fn from_networks(
        role: AgentRole,
        (low, high): (f64, f64),
        actor: DenseNetwork,
        critic: DenseNetwork,
        cfg: &AgentConfig,
    ) -> Self {
        Self {
            role,
            low,
            high,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: OptimizerState::new(&actor, AdamConfig::with_lr(cfg.actor_lr)),
            critic_opt: OptimizerState::new(&critic, AdamConfig::with_lr(cfg.critic_lr)),
            actor,
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: NoiseProcess::new(cfg.noise_for(role)),
            learn_steps: 0,
            action_l2: cfg.action_l2_for(role),
        }
    }

    pub fn state_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn to_physical(&self, normalized: f64) -> f64 {
        self.low + (normalized.clamp(-1.0, 1.0) + 1.0) * 0.5 * (self.high - self.low)
    }

    pub fn to_normalized(&self, physical: f64) -> f64 {
        if self.high > self.low {
            ((physical - self.low) / (self.high - self.low) * 2.0 - 1.0).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }

    /// Policy output in normalized units, with optional exploration noise,
    /// clipped to `[-1, 1]`.
    pub fn act_normalized<R: Rng + ?Sized>(
        &mut self,
        state: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<f64, AgentError> {
        let mut a = self.actor.forward(state)?[0];
        if explore {
            a += self.noise.sample(rng);
        }
        Ok(a.clamp(-1.0, 1.0))
    }

    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], explore: bool, rng: &mut R) -> Result<f64, AgentError> {
        let a = self.act_normalized(state, explore, rng)?;
        Ok(self.to_physical(a))
    }

    /// Deterministic policy action in physical units.
    pub fn policy(&self, state: &[f64]) -> Result<f64, AgentError> {
        Ok(self.to_physical(self.actor.forward(state)?[0]))
    }

    pub fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Bootstrapped critic targets `r + γ (1 − done) Q'(s', μ'(s'))`.
    pub fn critic_targets(&self, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>, AgentError> {
        let next = stack(batch.iter().map(|t| t.next_state.as_slice()), self.state_len());
        let next_actions = self.target_actor.predict_batch(&next)?;
        let next_q = self.target_critic.predict_batch(&with_action(&next, &next_actions))?;
        Ok(batch
            .iter()
            .zip(next_q.column(0))
            .map(|(t, &q)| t.reward + if t.terminal { 0.0 } else { gamma * q })
            .collect())
    }

    pub fn learn_step<R: Rng + ?Sized>(
        &mut self,
        batch_size: usize,
        gamma: f64,
        tau: f64,
        rng: &mut R,
    ) -> Result<LearnOutcome, AgentError> {
        if batch_size == 0 || self.buffer.len() < batch_size {
            return Ok(LearnOutcome::Skipped { buffer_len: self.buffer.len() });
        }
        let owned: Vec<Transition> =
            self.buffer.sample(batch_size, rng).expect("non-empty buffer").into_iter().cloned().collect();
        let batch: Vec<&Transition> = owned.iter().collect();
        let diag = self.update_on(&batch, gamma, tau)?;
        Ok(LearnOutcome::Updated(diag))
    }

    /// One critic step, one actor step and the soft target update on a given batch.
    pub fn update_on(&mut self, batch: &[&Transition], gamma: f64, tau: f64) -> Result<LearnDiagnostics, AgentError> {
        let n = batch.len() as f64;
        let targets = self.critic_targets(batch, gamma)?;
        let states = stack(batch.iter().map(|t| t.state.as_slice()), self.state_len());
        let actions = Array2::from_shape_fn((batch.len(), 1), |(i, _)| batch[i].action);

        let cache = self.critic.forward_batch(&with_action(&states, &actions))?;
        let q = cache.output().column(0).to_owned();
        let mut critic_loss = 0.0;
        let upstream = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
            let err = q[i] - targets[i];
            critic_loss += err * err;
            2.0 * err / n
        });
        critic_loss /= n;
        let (grads, _) = self.critic.backward(&cache, &upstream)?;
        self.critic_opt.step(&mut self.critic, &grads)?;

        let actor_cache = self.actor.forward_batch(&states)?;
        let mu = actor_cache.output().clone();
        let q_cache = self.critic.forward_batch(&with_action(&states, &mu))?;
        let actor_objective = q_cache.output().mean().unwrap_or(0.0);
        let dq = self.critic.input_gradient(&q_cache, &Array2::from_elem((batch.len(), 1), 1.0 / n))?;
        let dq_da = dq.slice(s![.., self.state_len()..]).to_owned();
        // Ascend Q: descend -Q + l2·a².
        let upstream = &mu * (2.0 * self.action_l2 / n) - dq_da;
        let (actor_grads, _) = self.actor.backward(&actor_cache, &upstream)?;
        self.actor_opt.step(&mut self.actor, &actor_grads)?;

        self.target_actor.soft_update_from(&self.actor, tau);
        self.target_critic.soft_update_from(&self.critic, tau);
        self.learn_steps += 1;
        Ok(LearnDiagnostics { critic_loss, actor_objective })
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    fn file_names(&self) -> [(String, &DenseNetwork); 4] {
        let r = self.role.name();
        [
            (format!("{r}_actor.bin"), &self.actor),
            (format!("{r}_critic.bin"), &self.critic),
            (format!("{r}_target_actor.bin"), &self.target_actor),
            (format!("{r}_target_critic.bin"), &self.target_critic),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        for (name, net) in self.file_names() {
            let path = dir.join(name);
            fs::write(&path, net.to_checkpoint_bytes()).map_err(|e| io_err(&path, e))?;
        }
        let path = dir.join(format!("{}_replay.bin", self.role.name()));
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        self.buffer.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    pub fn load(
        dir: &Path,
        role: AgentRole,
        bounds: (f64, f64),
        cfg: &AgentConfig,
    ) -> Result<Self, AgentError> {
        let read = |name: String| -> Result<DenseNetwork, AgentError> {
            let path = dir.join(name);
            let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            Ok(DenseNetwork::read_checkpoint(BufReader::new(file))?)
        };
        let r = role.name();
        let actor = read(format!("{r}_actor.bin"))?;
        let critic = read(format!("{r}_critic.bin"))?;
        if critic.input_len() != actor.input_len() + 1 || actor.output_len() != 1 || critic.output_len() != 1 {
            return Err(AgentError::BadCheckpoint(format!("{r} networks do not fit together")));
        }
        let mut agent = Self::from_networks(role, bounds, actor, critic, cfg);
        agent.target_actor = read(format!("{r}_target_actor.bin"))?;
        agent.target_critic = read(format!("{r}_target_critic.bin"))?;
        let path = dir.join(format!("{r}_replay.bin"));
        if path.exists() {
            let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            agent.buffer = ReplayBuffer::read_from(&mut BufReader::new(file))?;
        }
        Ok(agent)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AgentError {
    AgentError::Io { path: path.display().to_string(), source }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / width.max(1);
    Array2::from_shape_vec((n, width), data).expect("rows of equal width")
}

fn with_action(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[states.view(), actions.view()]).expect("same row count")
}

/// Backward recursion `R_t = r_t + γ R_{t+1}` over a finite episode.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// The price and quantity agents acting together on one environment.
#[derive(Debug, Clone)]
pub struct BiddingAgents {
    pub price: Agent,
    pub quantity: Agent,
    pub encoder: StateEncoder,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLearn {
    pub price: LearnOutcome,
    pub quantity: LearnOutcome,
}

impl BiddingAgents {
    pub fn new<R: Rng + ?Sized>(
        encoder: StateEncoder,
        bounds: &ActionBounds,
        config: AgentConfig,
        rng: &mut R,
    ) -> Self {
        let n = encoder.len();
        let price = Agent::new(AgentRole::Price, n, (bounds.price_min, bounds.price_max), &config, rng);
        let quantity = Agent::new(AgentRole::Quantity, n, (0.0, bounds.quantity_max), &config, rng);
        Self { price, quantity, encoder, config }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, state: &EnvState, explore: bool, rng: &mut R) -> Result<EnvAction, AgentError> {
        let x = self.encoder.encode(state);
        Ok(EnvAction { price: self.price.act(&x, explore, rng)?, quantity: self.quantity.act(&x, explore, rng)? })
    }

    pub fn policy(&self, state: &EnvState) -> Result<EnvAction, AgentError> {
        let x = self.encoder.encode(state);
        Ok(EnvAction { price: self.price.policy(&x)?, quantity: self.quantity.policy(&x)? })
    }

    /// Stores the shared experience in both buffers, each with its own action.
    pub fn observe(&mut self, state: &EnvState, action: EnvAction, reward: f64, next: &EnvState, terminal: bool) {
        let s = self.encoder.encode(state);
        let s2 = self.encoder.encode(next);
        let r = reward / self.config.reward_scale;
        let pa = self.price.to_normalized(action.price);
        let qa = self.quantity.to_normalized(action.quantity);
        self.price.observe(Transition { state: s.clone(), action: pa, reward: r, next_state: s2.clone(), terminal });
        self.quantity.observe(Transition { state: s, action: qa, reward: r, next_state: s2, terminal });
    }

    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<JointLearn, AgentError> {
        let AgentConfig { batch_size, gamma, tau, updates_per_step, .. } = self.config;
        let mut out = JointLearn {
            price: LearnOutcome::Skipped { buffer_len: self.price.buffer.len() },
            quantity: LearnOutcome::Skipped { buffer_len: self.quantity.buffer.len() },
        };
        for _ in 0..updates_per_step.max(1) {
            out = JointLearn {
                price: self.price.learn_step(batch_size, gamma, tau, rng)?,
                quantity: self.quantity.learn_step(batch_size, gamma, tau, rng)?,
            };
        }
        Ok(out)
    }

    pub fn anneal_exploration(&mut self) {
        self.price.noise.anneal();
        self.quantity.noise.anneal();
    }

    pub fn is_finite(&self) -> bool {
        self.price.is_finite() && self.quantity.is_finite()
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        self.price.save(dir)?;
        self.quantity.save(dir)
    }

    pub fn load(dir: &Path, encoder: StateEncoder, bounds: &ActionBounds, config: AgentConfig) -> Result<Self, AgentError> {
        let price = Agent::load(dir, AgentRole::Price, (bounds.price_min, bounds.price_max), &config)?;
        let quantity = Agent::load(dir, AgentRole::Quantity, (0.0, bounds.quantity_max), &config)?;
        for a in [&price, &quantity] {
            if a.state_len() != encoder.len() {
                return Err(AgentError::BadCheckpoint(format!(
                    "{} agent expects {} state features, configuration produces {}",
                    a.role.name(),
                    a.state_len(),
                    encoder.len()
                )));
            }
        }
        Ok(Self { price, quantity, encoder, config })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::sim::seeded_rng;
    use ndarray::Array1;

    fn t(reward: f64) -> Transition {
        Transition { state: vec![reward, 0.0], action: 0.1, reward, next_state: vec![0.0, 1.0], terminal: false }
    }

    fn small_cfg() -> AgentConfig {
        AgentConfig { hidden: vec![8, 8], batch_size: 4, buffer_capacity: 64, ..Default::default() }
    }

    #[test]
    fn ring_buffer_evicts_oldest() {
        let mut b = ReplayBuffer::new(2);
        assert!(b.is_empty());
        b.push(t(1.0));
        assert_eq!(b.len(), 1);
        b.push(t(2.0));
        b.push(t(3.0));
        assert_eq!(b.len(), 2);
        let rewards: Vec<f64> = b.iter_chronological().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        assert_eq!(b.get(0), Some(&t(3.0)));
    }

    #[test]
    fn empty_buffer_refuses_sampling() {
        let b = ReplayBuffer::new(4);
        assert!(b.sample(2, &mut seeded_rng(0, 0)).is_none());
    }

    #[test]
    fn stored_transition_round_trips() {
        let mut b = ReplayBuffer::new(3);
        let tr = Transition { state: vec![0.25, 0.5], action: -0.75, reward: 1.5, next_state: vec![1.0, 0.0], terminal: true };
        b.push(tr.clone());
        assert_eq!(b.get(0), Some(&tr));
        let mut bytes = Vec::new();
        b.write_to(&mut bytes).unwrap();
        let back = ReplayBuffer::read_from(&mut &bytes[..]).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn noise_schedule_decays_linearly() {
        let mut n = NoiseProcess::new(NoiseConfig { start: 0.2, end: 0.02, decay_steps: 10, ..Default::default() });
        let mut rng = seeded_rng(0, 0);
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let s = n.scale();
            assert!(s <= last && s >= 0.02 - 1e-12);
            last = s;
            n.sample(&mut rng);
        }
        assert!((n.scale() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn discounted_returns() {
        assert_eq!(discounted_return(&[1.0, 2.0, 3.0], 0.0), vec![1.0, 2.0, 3.0]);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(discounted_return(&[0.0; 4], 0.9), vec![0.0; 4]);
        let r = discounted_return(&[1.0, 2.0], 0.5);
        assert_eq!(r, vec![2.0, 2.0]);
    }

    #[test]
    fn zero_final_layer_acts_at_midpoint() {
        let cfg = AgentConfig { actor_final_init: 0.0, ..small_cfg() };
        let mut a = Agent::new(AgentRole::Quantity, 3, (0.0, 300.0), &cfg, &mut seeded_rng(1, 0));
        let mut rng = seeded_rng(2, 0);
        assert_eq!(a.act(&[0.3, 0.1, 0.9], false, &mut rng).unwrap(), 150.0);
    }

    #[test]
    fn greedy_action_is_repeatable_and_noisy_action_is_clipped() {
        let cfg = AgentConfig { noise: NoiseConfig { start: 50.0, end: 50.0, ..Default::default() }, ..small_cfg() };
        let mut a = Agent::new(AgentRole::Price, 3, (0.0, 10.0), &cfg, &mut seeded_rng(1, 0));
        let mut rng = seeded_rng(3, 0);
        let x = [0.2, 0.4, 0.6];
        let g1 = a.act(&x, false, &mut rng).unwrap();
        let g2 = a.act(&x, false, &mut rng).unwrap();
        assert_eq!(g1, g2);
        for _ in 0..1000 {
            let v = a.act(&x, true, &mut rng).unwrap();
            assert!((0.0..=10.0).contains(&v));
        }
    }

    #[test]
    fn learn_step_skips_when_buffer_is_short() {
        let cfg = small_cfg();
        let mut a = Agent::new(AgentRole::Price, 2, (0.0, 10.0), &cfg, &mut seeded_rng(1, 0));
        a.observe(t(1.0));
        let out = a.learn_step(4, 0.9, 0.01, &mut seeded_rng(0, 0)).unwrap();
        assert_eq!(out, LearnOutcome::Skipped { buffer_len: 1 });
    }

    #[test]
    fn gamma_zero_targets_are_rewards() {
        let cfg = small_cfg();
        let a = Agent::new(AgentRole::Price, 2, (0.0, 10.0), &cfg, &mut seeded_rng(1, 0));
        let batch = [t(0.5), t(-1.25), t(3.0)];
        let refs: Vec<&Transition> = batch.iter().collect();
        assert_eq!(a.critic_targets(&refs, 0.0).unwrap(), vec![0.5, -1.25, 3.0]);
    }

    #[test]
    fn tau_one_copies_and_tau_zero_freezes() {
        let cfg = small_cfg();
        let mut a = Agent::new(AgentRole::Price, 2, (0.0, 10.0), &cfg, &mut seeded_rng(1, 0));
        for i in 0..8 {
            a.observe(t(i as f64 * 0.1));
        }
        let mut rng = seeded_rng(0, 0);
        a.learn_step(4, 0.9, 1.0, &mut rng).unwrap();
        assert_eq!(a.target_actor.layers(), a.actor.layers());
        assert_eq!(a.target_critic.layers(), a.critic.layers());

        let frozen_actor = a.target_actor.clone();
        let frozen_critic = a.target_critic.clone();
        for _ in 0..3 {
            a.learn_step(4, 0.9, 0.0, &mut rng).unwrap();
        }
        assert_eq!(a.target_actor.layers(), frozen_actor.layers());
        assert_eq!(a.target_critic.layers(), frozen_critic.layers());
        assert!(a.actor.max_abs_diff(&frozen_actor) > 0.0);
    }

    #[test]
    fn soft_update_shrinks_distance_by_one_minus_tau() {
        let mut rng = seeded_rng(5, 0);
        let spec = NetworkSpec {
            input: 3,
            hidden: vec![4],
            output: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            final_layer_scale: None,
        };
        let online = DenseNetwork::new(&spec, &mut rng);
        let mut target = DenseNetwork::new(&spec, &mut rng);
        let tau = 0.3;
        let before = target.max_abs_diff(&online);
        target.soft_update_from(&online, tau);
        let after = target.max_abs_diff(&online);
        assert!((after - (1.0 - tau) * before).abs() < 1e-12 * before.max(1.0));
    }

    /// Critic rigged as Q(s, a) = -|a - a*| through a relu pair; one actor
    /// step must move the policy toward a*.
    #[test]
    fn actor_step_moves_toward_critic_optimum() {
        let target = 0.4;
        let actor = DenseNetwork::from_layers(vec![Layer {
            weights: Array2::from_elem((1, 1), 0.0),
            bias: Array1::from(vec![-0.2]),
            activation: Activation::Tanh,
        }]);
        let critic = DenseNetwork::from_layers(vec![
            Layer {
                weights: ndarray::arr2(&[[0.0, 0.0], [1.0, -1.0]]),
                bias: Array1::from(vec![-target, target]),
                activation: Activation::Relu,
            },
            Layer {
                weights: ndarray::arr2(&[[-1.0], [-1.0]]),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ]);
        let cfg = AgentConfig { actor_lr: 0.01, critic_lr: 0.0, ..small_cfg() };
        let mut agent = Agent::from_networks(AgentRole::Price, (-1.0, 1.0), actor, critic.clone(), &cfg);
        let before = agent.actor.forward(&[1.0]).unwrap()[0];
        let batch = [Transition { state: vec![1.0], action: 0.0, reward: 0.0, next_state: vec![1.0], terminal: true }];
        let refs: Vec<&Transition> = batch.iter().collect();
        agent.update_on(&refs, 0.0, 0.0).unwrap();
        let after = agent.actor.forward(&[1.0]).unwrap()[0];
        assert!(after > before && after < target, "{before} -> {after}");
    }
}
