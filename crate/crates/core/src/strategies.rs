//! Baseline execution policies: TWAP, passive and random.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::execenv::{ExecAction, ExecConfig};
use crate::seeding;

/// Anything that picks an action at each step of an execution episode.
pub trait Policy: Send {
    fn name(&self) -> &str;
    /// Called once before the first step with the episode seed.
    fn begin_episode(&mut self, _seed: u64) {}
    fn act(&mut self, step: usize, observation: &[f64]) -> ExecAction;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rl,
    Twap,
    Passive,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Rl,
        PolicyKind::Twap,
        PolicyKind::Passive,
        PolicyKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Rl => "rl",
            PolicyKind::Twap => "twap",
            PolicyKind::Passive => "passive",
            PolicyKind::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rl" | "dqn" => Ok(PolicyKind::Rl),
            "twap" => Ok(PolicyKind::Twap),
            "passive" => Ok(PolicyKind::Passive),
            "random" => Ok(PolicyKind::Random),
            other => Err(format!(
                "unknown policy '{other}' (expected rl, twap, passive or random)"
            )),
        }
    }
}

/// Units of `q_min` sent at each slot: `ceil((j+1)n/N) − ceil(jn/N)` with
/// `n = floor(X0 / q_min)`, which spreads `n` children evenly over `N` slots.
pub fn twap_schedule(n_children: u64, n_slots: usize) -> Vec<u64> {
    let n = n_children as u128;
    let slots = n_slots as u128;
    let cum = |j: u128| (j * n).div_ceil(slots);
    (0..slots).map(|j| (cum(j + 1) - cum(j)) as u64).collect()
}

#[derive(Debug, Clone)]
pub struct Twap {
    schedule: Vec<u64>,
    max_units: u64,
}

impl Twap {
    pub fn new(cfg: &ExecConfig) -> Self {
        Twap {
            schedule: twap_schedule(cfg.parent_size / cfg.q_min, cfg.n_steps()),
            max_units: cfg.n_size_actions as u64,
        }
    }

    pub fn schedule(&self) -> &[u64] {
        &self.schedule
    }
}

impl Policy for Twap {
    fn name(&self) -> &str {
        "twap"
    }
    fn act(&mut self, step: usize, _obs: &[f64]) -> ExecAction {
        let units = self.schedule.get(step).copied().unwrap_or(0);
        ExecAction(units.min(self.max_units) as usize)
    }
}

/// Branch probabilities of the two stochastic baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    /// Passive: probability of each action index.
    pub passive_probs: Vec<f64>,
    /// Random: probability of idling outright.
    pub random_idle_prob: f64,
    /// Random: otherwise pick uniformly among these action indices.
    pub random_choices: Vec<usize>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            passive_probs: vec![0.6, 0.1, 0.1, 0.1, 0.1],
            random_idle_prob: 0.5,
            random_choices: vec![0, 1, 2, 3],
        }
    }
}

impl BaselineParams {
    pub fn validate(&self, n_actions: usize) -> Result<(), String> {
        let p = &self.passive_probs;
        if p.len() != n_actions || p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!(
                "passive_probs must hold {n_actions} non-negative values summing to 1"
            ));
        }
        if !(0.0..=1.0).contains(&self.random_idle_prob) {
            return Err("random_idle_prob must lie in [0, 1]".into());
        }
        if self.random_choices.is_empty() || self.random_choices.iter().any(|&a| a >= n_actions) {
            return Err("random_choices must be non-empty valid action indices".into());
        }
        Ok(())
    }

    /// Action distribution of the random baseline.
    pub fn random_probs(&self, n_actions: usize) -> Vec<f64> {
        let mut p = vec![0.0; n_actions];
        p[0] += self.random_idle_prob;
        let share = (1.0 - self.random_idle_prob) / self.random_choices.len() as f64;
        for &a in &self.random_choices {
            p[a] += share;
        }
        p
    }
}

/// Samples an index from `probs` using one uniform draw.
fn categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws an action from a fixed distribution; each draw depends only on
/// `(episode seed, step)`.
#[derive(Debug, Clone)]
pub struct Stochastic {
    name: &'static str,
    probs: Vec<f64>,
    seed: u64,
}

impl Stochastic {
    pub fn passive(params: &BaselineParams) -> Self {
        Stochastic {
            name: "passive",
            probs: params.passive_probs.clone(),
            seed: 0,
        }
    }

    pub fn random(params: &BaselineParams, n_actions: usize) -> Self {
        Stochastic {
            name: "random",
            probs: params.random_probs(n_actions),
            seed: 0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for Stochastic {
    fn name(&self) -> &str {
        self.name
    }
    fn begin_episode(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn act(&mut self, step: usize, _obs: &[f64]) -> ExecAction {
        let mut rng = seeding::rng_from(self.seed, &[0x9011C7, step as u64]);
        ExecAction(categorical(&self.probs, &mut rng))
    }
}

/// Builds a baseline policy. `Rl` is not a baseline and yields `None`.
pub fn baseline(kind: PolicyKind, cfg: &ExecConfig, params: &BaselineParams) -> Option<Box<dyn Policy>> {
    match kind {
        PolicyKind::Twap => Some(Box::new(Twap::new(cfg))),
        PolicyKind::Passive => Some(Box::new(Stochastic::passive(params))),
        PolicyKind::Random => Some(Box::new(Stochastic::random(params, cfg.n_actions()))),
        PolicyKind::Rl => None,
    }
}
