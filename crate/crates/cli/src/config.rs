//! Run configuration: one TOML file holding every knob, layered over a
//! market preset and then over command-line flags.

use std::path::Path;

use lobsim_core::dqn::DqnConfig;
use lobsim_core::eval::{default_grid, SweepCell};
use lobsim_core::execenv::{ExecConfig, SimVenueFactory};
use lobsim_core::market::MarketConfig;
use lobsim_core::strategies::BaselineParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 1000 noise, 102 value, 12 momentum, 1 market maker.
    #[default]
    Full,
    /// 100 noise, 10 value, 2 momentum, 1 market maker.
    Lite,
}

impl Preset {
    pub fn market(self) -> MarketConfig {
        match self {
            Preset::Full => MarketConfig::default(),
            Preset::Lite => MarketConfig::lite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub duration_secs: u64,
    /// Number of consecutive seeds starting at the master seed.
    pub sessions: u64,
    pub depth: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            duration_secs: 1800,
            sessions: 1,
            depth: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 500,
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub bins: usize,
    pub baselines: BaselineParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 50,
            bins: 20,
            baselines: BaselineParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub cells: Vec<SweepCell>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { cells: default_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub experiment: String,
    pub preset: Preset,
    /// Background trading before each execution window opens.
    pub warmup_secs: u64,
    pub market: MarketConfig,
    pub exec: ExecConfig,
    pub dqn: DqnConfig,
    pub simulate: SimulateConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub benchmark: BenchmarkConfig,
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        RunConfig {
            seed: 1,
            experiment: "default".into(),
            preset,
            warmup_secs: 120,
            market: preset.market(),
            exec: ExecConfig::default(),
            dqn: DqnConfig::default(),
            simulate: SimulateConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }

    /// Parses TOML on top of the defaults of the preset it names.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let user: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let preset = match user.get("preset") {
            Some(v) => Preset::deserialize(v.clone()).map_err(|e| CliError::Config(format!("preset: {e}")))?,
            None => Preset::default(),
        };
        let mut base = toml::Table::try_from(RunConfig::with_preset(preset))
            .map_err(|e| CliError::Config(format!("serializing defaults: {e}")))?;
        merge(&mut base, user);
        let cfg: RunConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
                RunConfig::from_toml(&text)
            }
            None => Ok(RunConfig::with_preset(Preset::default())),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: String| CliError::Config(e);
        self.market.validate().map_err(|e| cfg(e.to_string()))?;
        self.exec.validate().map_err(|e| cfg(e.to_string()))?;
        self.dqn.validate().map_err(|e| cfg(e.to_string()))?;
        self.eval.baselines.validate(self.exec.n_actions()).map_err(cfg)?;
        if self.experiment.is_empty() || self.experiment.contains(['/', '\\']) {
            return Err(cfg("experiment must be a non-empty name without path separators".into()));
        }
        if self.eval.episodes < 2 {
            return Err(cfg("eval.episodes must be >= 2".into()));
        }
        if self.eval.bins == 0 || self.simulate.depth == 0 || self.train.checkpoint_every == 0 {
            return Err(cfg(
                "eval.bins, simulate.depth and train.checkpoint_every must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn venue(&self) -> SimVenueFactory {
        SimVenueFactory {
            market: self.market.clone(),
            warmup_secs: self.warmup_secs,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
