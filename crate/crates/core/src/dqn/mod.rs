//! Deep Q-learning: Q-network, replay memory, ε-greedy exploration with linear
//! schedules, and the online training loop.

mod network;
mod replay;

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use network::{Optimizer, OptimizerKind, QNetwork, Sample};
pub use replay::{ReplayMemory, Transition};

use crate::execenv::{EnvError, Environment, ExecAction};
use crate::seeding;
use crate::strategies::Policy;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const ROLLING_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("non-finite loss at episode {episode}, gradient step {grad_step}")]
    NonFiniteLoss { episode: u64, grad_step: u64 },
    #[error("environment error in episode {episode}: {source}")]
    Env { episode: u64, source: EnvError },
    #[error("invalid dqn config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Linear interpolation from `start` to `end` over `steps`, then held at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if self.steps == 0 || t >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * (t as f64 / self.steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Indexed by gradient step.
    pub lr: LinearSchedule,
    /// Indexed by environment step.
    pub epsilon: LinearSchedule,
    /// Transitions required before the first gradient step.
    pub warmup: usize,
    /// Copy the online net into a separate target net every this many
    /// gradient steps. 0 bootstraps from the online net itself, which on the
    /// simulated market often collapses into dumping the order at once.
    pub target_sync: u64,
    pub optimizer: OptimizerKind,
    /// Multiplies rewards before they enter the replay memory.
    pub reward_scale: f64,
    pub train_every: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![50, 20],
            replay_capacity: 100_000,
            batch_size: 64,
            gamma: 0.9999,
            lr: LinearSchedule {
                start: 1e-3,
                end: 0.0,
                steps: 90_000,
            },
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.02,
                steps: 10_000,
            },
            warmup: 1000,
            target_sync: 1000,
            optimizer: OptimizerKind::default(),
            reward_scale: 1e-3,
            train_every: 1,
        }
    }
}

impl DqnConfig {
    /// Divides both schedule lengths and the warm-up by `factor`.
    pub fn scaled(mut self, factor: u64) -> Self {
        self.lr.steps /= factor;
        self.epsilon.steps /= factor;
        self.warmup /= factor as usize;
        self
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        let fail = |m: &str| Err(DqnError::Config(m.to_string()));
        if self.hidden.contains(&0) {
            return fail("hidden layer sizes must be positive");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.train_every == 0 {
            return fail("replay_capacity, batch_size and train_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(self.lr.start >= 0.0 && self.lr.end >= 0.0) {
            return fail("learning rates must be >= 0");
        }
        let e = &self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end)) {
            return fail("epsilon schedule must stay within [0, 1]");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return fail("reward_scale must be finite and > 0");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, obs_dim: usize, n_actions: usize) -> Vec<usize> {
        let mut s = vec![obs_dim];
        s.extend(&self.hidden);
        s.push(n_actions);
        s
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy action selection.
pub fn act<R: Rng>(net: &QNetwork, s: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, DqnError> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&net.forward(s)?))
}

/// `r` for terminal transitions, else `r + γ·max_a Q_target(s', a)`.
pub fn td_targets(batch: &[&Transition], target: &QNetwork, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.reward
            } else {
                let q = target.forward_unchecked(&t.next_state);
                t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// One optimizer step on the mean squared TD error. Returns the loss before the update.
pub fn gradient_step(
    net: &mut QNetwork,
    opt: &mut Optimizer,
    batch: &[&Transition],
    targets: &[f64],
    lr: f64,
) -> Result<f64, DqnError> {
    if lr < 0.0 {
        return Err(DqnError::Config("negative learning rate".into()));
    }
    let samples: Vec<Sample> = batch
        .iter()
        .zip(targets)
        .map(|(t, &y)| Sample {
            state: &t.state,
            action: t.action,
            target: y,
        })
        .collect();
    let (loss, grad) = net.loss_and_grad(&samples)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DqnError::NonFiniteLoss {
            episode: 0,
            grad_step: 0,
        });
    }
    opt.apply(net.params_mut(), &grad, lr);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub total_reward: f64,
    pub rolling_mean: f64,
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &[CurvePoint]) -> io::Result<()> {
    writeln!(w, "episode,total_reward,rolling_mean")?;
    for p in curve {
        writeln!(w, "{},{},{}", p.episode, p.total_reward, p.rolling_mean)?;
    }
    Ok(())
}

/// Serializable training state. The replay memory is not saved; a resumed
/// run refills it before learning again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub target_params: Option<Vec<f64>>,
    pub optimizer: Optimizer,
    pub env_steps: u64,
    pub grad_steps: u64,
    pub episodes_done: u64,
    pub recent_rewards: Vec<f64>,
}

impl Checkpoint {
    pub fn network(&self) -> Result<QNetwork, DqnError> {
        QNetwork::from_params(&self.sizes, self.params.clone())
    }

    pub fn load(path: &Path) -> Result<Self, DqnError> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| DqnError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(DqnError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        ckpt.network()?;
        Ok(ckpt)
    }

    /// Writes to a temporary sibling first so a crash never leaves a torn file.
    pub fn save(&self, path: &Path) -> Result<(), DqnError> {
        let tmp = path.with_extension("tmp");
        let json = serde_json::to_string(self).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
        fs::write(&tmp, json)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub struct Trainer {
    config: DqnConfig,
    seed: u64,
    net: QNetwork,
    target: Option<QNetwork>,
    optimizer: Optimizer,
    replay: ReplayMemory,
    env_steps: u64,
    grad_steps: u64,
    episodes_done: u64,
    recent: VecDeque<f64>,
    last_loss: Option<f64>,
}

impl Trainer {
    pub fn new(config: DqnConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self, DqnError> {
        config.validate()?;
        let sizes = config.layer_sizes(obs_dim, n_actions);
        let net = QNetwork::random(&sizes, &mut seeding::rng_from(seed, &[0x1417]));
        let optimizer = Optimizer::new(config.optimizer, net.params().len());
        Ok(Trainer {
            target: (config.target_sync > 0).then(|| net.clone()),
            replay: ReplayMemory::new(config.replay_capacity),
            config,
            seed,
            net,
            optimizer,
            env_steps: 0,
            grad_steps: 0,
            episodes_done: 0,
            recent: VecDeque::with_capacity(ROLLING_WINDOW),
            last_loss: None,
        })
    }

    pub fn resume(config: DqnConfig, ckpt: Checkpoint, seed: u64) -> Result<Self, DqnError> {
        config.validate()?;
        let net = ckpt.network()?;
        let target = match (config.target_sync > 0, ckpt.target_params) {
            (true, Some(p)) => Some(QNetwork::from_params(&ckpt.sizes, p)?),
            (true, None) => Some(net.clone()),
            (false, _) => None,
        };
        if ckpt.optimizer.kind != config.optimizer {
            return Err(DqnError::Checkpoint("optimizer differs from the configured one".into()));
        }
        Ok(Trainer {
            replay: ReplayMemory::new(config.replay_capacity),
            config,
            seed,
            net,
            target,
            optimizer: ckpt.optimizer,
            env_steps: ckpt.env_steps,
            grad_steps: ckpt.grad_steps,
            episodes_done: ckpt.episodes_done,
            recent: ckpt.recent_rewards.into_iter().collect(),
            last_loss: None,
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn into_network(self) -> QNetwork {
        self.net
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.replay
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            sizes: self.net.sizes().to_vec(),
            params: self.net.params().to_vec(),
            target_params: self.target.as_ref().map(|t| t.params().to_vec()),
            optimizer: self.optimizer.clone(),
            env_steps: self.env_steps,
            grad_steps: self.grad_steps,
            episodes_done: self.episodes_done,
            recent_rewards: self.recent.iter().copied().collect(),
        }
    }

    /// Environment seed used for training episode `episode` (0-based).
    pub fn episode_seed(&self, episode: u64) -> u64 {
        seeding::derive_seed(self.seed, &[0x7EA1, episode])
    }

    fn learn(&mut self, rng: &mut ChaCha8Rng) -> Result<(), DqnError> {
        let cfg = &self.config;
        if self.replay.len() < cfg.warmup.max(cfg.batch_size) || !self.env_steps.is_multiple_of(cfg.train_every) {
            return Ok(());
        }
        let idx = self.replay.sample_indices(cfg.batch_size, rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.replay.get(i)).collect();
        let targets = td_targets(&batch, self.target.as_ref().unwrap_or(&self.net), cfg.gamma);
        let lr = cfg.lr.value(self.grad_steps);
        let loss = gradient_step(&mut self.net, &mut self.optimizer, &batch, &targets, lr).map_err(|e| match e {
            DqnError::NonFiniteLoss { .. } => DqnError::NonFiniteLoss {
                episode: self.episodes_done,
                grad_step: self.grad_steps,
            },
            other => other,
        })?;
        self.last_loss = Some(loss);
        self.grad_steps += 1;
        if let Some(target) = self.target.as_mut() {
            if self.grad_steps.is_multiple_of(cfg.target_sync) {
                target.clone_from(&self.net);
            }
        }
        Ok(())
    }

    /// Runs one training episode and returns its learning-curve point.
    pub fn run_episode(&mut self, env: &mut dyn Environment) -> Result<CurvePoint, DqnError> {
        let episode = self.episodes_done;
        let env_err = |source| DqnError::Env { episode, source };
        if env.n_actions() != self.net.output_dim() || env.obs_dim() != self.net.input_dim() {
            return Err(DqnError::Shape(format!(
                "environment has {} inputs and {} actions, network has {:?}",
                env.obs_dim(),
                env.n_actions(),
                self.net.sizes()
            )));
        }
        let mut act_rng = seeding::rng_from(self.seed, &[0xAC7, episode]);
        let mut learn_rng = seeding::rng_from(self.seed, &[0x5A3, episode]);
        let mut state = env.reset(self.episode_seed(episode)).map_err(env_err)?;
        let mut total = 0.0;
        loop {
            let eps = self.config.epsilon.value(self.env_steps);
            let action = act(&self.net, &state, eps, &mut act_rng)?;
            let (next, reward, done) = env.step_index(action).map_err(env_err)?;
            total += reward;
            self.replay.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: reward * self.config.reward_scale,
                next_state: next.clone(),
                done,
            });
            self.env_steps += 1;
            self.learn(&mut learn_rng)?;
            if done {
                break;
            }
            state = next;
        }
        if self.recent.len() == ROLLING_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(total);
        self.episodes_done += 1;
        Ok(CurvePoint {
            episode: self.episodes_done,
            total_reward: total,
            rolling_mean: self.recent.iter().sum::<f64>() / self.recent.len() as f64,
        })
    }

    /// Trains for `episodes` more episodes. `after_episode` runs after each
    /// one, typically to write checkpoints.
    pub fn train(
        &mut self,
        env: &mut dyn Environment,
        episodes: u64,
        after_episode: &mut dyn FnMut(&Trainer, &CurvePoint) -> Result<(), DqnError>,
    ) -> Result<Vec<CurvePoint>, DqnError> {
        let mut curve = Vec::with_capacity(episodes as usize);
        for _ in 0..episodes {
            let point = self.run_episode(env)?;
            after_episode(self, &point)?;
            curve.push(point);
        }
        Ok(curve)
    }
}

/// Greedy policy over a frozen network.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    net: Arc<QNetwork>,
}

impl GreedyPolicy {
    pub fn new(net: Arc<QNetwork>) -> Self {
        GreedyPolicy { net }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "rl"
    }
    fn act(&mut self, _step: usize, observation: &[f64]) -> ExecAction {
        let q = self
            .net
            .forward(observation)
            .expect("observation matches network input");
        ExecAction(argmax(&q))
    }
}

/// Q-values of every action at each observation of an episode.
pub fn q_value_trace(net: &QNetwork, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DqnError> {
    observations.iter().map(|s| net.forward(s)).collect()
}

pub fn write_q_trace_csv<W: Write>(mut w: W, trace: &[Vec<f64>]) -> io::Result<()> {
    let width = trace.first().map_or(0, |q| q.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..width).map(|a| format!("q{a}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, q) in trace.iter().enumerate() {
        let row: Vec<String> = q.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{i},{}", row.join(","))?;
    }
    Ok(())
}
