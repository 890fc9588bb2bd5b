//! Evaluation harness: run policies over seeds, aggregate metrics, test for
//! significance and export distributions.

pub mod stats;
mod sweep;

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{histogram, mean, pooled_t_test, sample_variance, t_quantile, Histogram, TTestResult};
pub use sweep::{default_grid, sweep, CellOutcome, CellResult, SweepCell};

use crate::dqn::{GreedyPolicy, QNetwork};
use crate::execenv::{EnvError, EpisodeSummary, ExecConfig, ExecEnv, VenueFactory};
use crate::seeding;
use crate::strategies::{self, BaselineParams, Policy, PolicyKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("policy setup: {0}")]
    Policy(String),
    #[error("no seeds given")]
    NoSeeds,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A policy that can be instantiated once per worker.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    Baseline(PolicyKind, BaselineParams),
    Greedy(Arc<QNetwork>),
}

impl PolicySpec {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicySpec::Baseline(k, _) => *k,
            PolicySpec::Greedy(_) => PolicyKind::Rl,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().as_str()
    }

    pub fn build(&self, exec: &ExecConfig) -> Result<Box<dyn Policy>, EvalError> {
        match self {
            PolicySpec::Baseline(kind, params) => {
                params.validate(exec.n_actions()).map_err(EvalError::Policy)?;
                strategies::baseline(*kind, exec, params)
                    .ok_or_else(|| EvalError::Policy("rl policy needs a trained network".into()))
            }
            PolicySpec::Greedy(net) => {
                if net.input_dim() != exec.obs_dim() || net.output_dim() != exec.n_actions() {
                    return Err(EvalError::Policy(format!(
                        "network sizes {:?} do not match {} inputs and {} actions",
                        net.sizes(),
                        exec.obs_dim(),
                        exec.n_actions()
                    )));
                }
                Ok(Box::new(GreedyPolicy::new(net.clone())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: String,
    pub seed: u64,
    /// Implementation shortfall per parent share, positive when better than arrival.
    pub is: f64,
    /// Depth, terminal and over-execution penalties per parent share.
    pub pen: f64,
    pub t_frac: f64,
    pub reward: f64,
    pub executed: u64,
    pub steps: usize,
    /// Spread and parent-side imbalance observed at steps where shares were filled.
    pub exec_spreads: Vec<f64>,
    pub exec_imbalances: Vec<f64>,
}

impl EpisodeResult {
    pub fn from_summary(policy: &str, s: &EpisodeSummary) -> Self {
        let traded = s.trace.iter().filter(|t| t.filled > 0);
        let exec_spreads = traded
            .clone()
            .filter_map(|t| Some((t.best_ask? - t.best_bid?) as f64))
            .collect();
        let exec_imbalances = traded.map(|t| t.imbalance).collect();
        EpisodeResult {
            policy: policy.to_string(),
            seed: s.seed,
            is: s.normalized_is(),
            pen: s.normalized_penalty(),
            t_frac: s.time_fraction(),
            reward: s.reward_total,
            executed: s.executed,
            steps: s.steps_taken,
            exec_spreads,
            exec_imbalances,
        }
    }
}

/// Seeds for `n` evaluation episodes; disjoint from training episode seeds.
pub fn eval_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|i| seeding::derive_seed(master, &[0xE7A1, i]))
        .collect()
}

/// Plays one full episode and returns its summary.
pub fn run_episode<F: VenueFactory>(
    env: &mut ExecEnv<F>,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<EpisodeSummary, EvalError> {
    policy.begin_episode(seed);
    let mut obs = env.reset(seed)?;
    let mut step = 0;
    while !env.is_done() {
        let action = policy.act(step, &obs);
        obs = env.step(action)?.observation;
        step += 1;
    }
    Ok(env.take_summary().expect("episode ran"))
}

/// Runs one episode per seed, on up to `parallel` threads. Results follow the
/// order of `seeds` and do not depend on the thread count.
pub fn run_experiment<F>(
    policy: &PolicySpec,
    exec: &ExecConfig,
    factory: &F,
    seeds: &[u64],
    parallel: usize,
) -> Result<Vec<EpisodeResult>, EvalError>
where
    F: VenueFactory + Clone,
{
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    policy.build(exec)?;
    let one = |seed: u64| -> Result<EpisodeResult, EvalError> {
        let mut env = ExecEnv::new(exec.clone(), factory.clone())?;
        let mut p = policy.build(exec)?;
        let summary = run_episode(&mut env, p.as_mut(), seed)?;
        Ok(EpisodeResult::from_summary(policy.name(), &summary))
    };
    if parallel <= 1 {
        return seeds.iter().map(|&s| one(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    pool.install(|| seeds.par_iter().map(|&s| one(s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub n: usize,
    pub mean_is: f64,
    pub mean_pen: f64,
    pub mean_t: f64,
    pub var_is: f64,
}

pub const METRICS_HEADER: &str = "policy,n,E(IS),E(Pen),E(T),σ²(IS)";

/// Sample means and the unbiased IS variance of one policy's episodes.
pub fn aggregate(results: &[EpisodeResult]) -> Result<MetricsRow, EvalError> {
    if results.len() < 2 {
        return Err(EvalError::InsufficientData(format!(
            "aggregate needs >= 2 episodes, got {}",
            results.len()
        )));
    }
    let col = |f: fn(&EpisodeResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
    let is = col(|r| r.is);
    Ok(MetricsRow {
        policy: results[0].policy.clone(),
        n: results.len(),
        mean_is: mean(&is),
        mean_pen: mean(&col(|r| r.pen)),
        mean_t: mean(&col(|r| r.t_frac)),
        var_is: sample_variance(&is),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub policy_a: String,
    pub policy_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub result: TTestResult,
}

/// RL against every other policy in `experiments`: `H1: E(IS)_rl > E(IS)_other`.
pub fn rl_ttests(experiments: &[(String, Vec<EpisodeResult>)]) -> Result<Vec<TTestRow>, EvalError> {
    let Some((_, rl)) = experiments.iter().find(|(name, _)| name == "rl") else {
        return Ok(Vec::new());
    };
    let rl_is: Vec<f64> = rl.iter().map(|r| r.is).collect();
    experiments
        .iter()
        .filter(|(name, _)| name != "rl")
        .map(|(name, res)| {
            let other: Vec<f64> = res.iter().map(|r| r.is).collect();
            Ok(TTestRow {
                policy_a: "rl".into(),
                policy_b: name.clone(),
                n_a: rl_is.len(),
                n_b: other.len(),
                result: pooled_t_test(&rl_is, &other)?,
            })
        })
        .collect()
}

fn hash_line<W: Write>(w: &mut W, config_hash: &str) -> io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")
}

pub fn write_episodes_csv<W: Write>(mut w: W, results: &[EpisodeResult], config_hash: &str) -> io::Result<()> {
    hash_line(&mut w, config_hash)?;
    writeln!(w, "policy,seed,is,pen,t_frac,reward,executed,steps")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.policy, r.seed, r.is, r.pen, r.t_frac, r.reward, r.executed, r.steps
        )?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow], config_hash: &str) -> io::Result<()> {
    hash_line(&mut w, config_hash)?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.policy, r.n, r.mean_is, r.mean_pen, r.mean_t, r.var_is
        )?;
    }
    Ok(())
}

pub fn write_ttests_csv<W: Write>(mut w: W, rows: &[TTestRow], config_hash: &str) -> io::Result<()> {
    hash_line(&mut w, config_hash)?;
    writeln!(w, "policy_a,policy_b,n_a,n_b,t,df,critical,reject")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.policy_a, r.policy_b, r.n_a, r.n_b, r.result.t, r.result.df, r.result.critical, r.result.reject
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(mut w: W, h: &Histogram, config_hash: &str) -> io::Result<()> {
    hash_line(&mut w, config_hash)?;
    writeln!(w, "bin_lo,bin_hi,count")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", h.edges[i], h.edges[i + 1], c)?;
    }
    Ok(())
}

/// Writes `hist_is.csv`, `hist_spread.csv` and `hist_imbalance.csv` into `dir`.
pub fn export_distributions(
    dir: &Path,
    results: &[EpisodeResult],
    bins: usize,
    config_hash: &str,
) -> Result<(), EvalError> {
    if results.is_empty() {
        return Err(EvalError::InsufficientData("no episodes to export".into()));
    }
    fs::create_dir_all(dir)?;
    let is: Vec<f64> = results.iter().map(|r| r.is).collect();
    let spreads: Vec<f64> = results.iter().flat_map(|r| r.exec_spreads.iter().copied()).collect();
    let imbalances: Vec<f64> = results.iter().flat_map(|r| r.exec_imbalances.iter().copied()).collect();
    for (name, values) in [("is", is), ("spread", spreads), ("imbalance", imbalances)] {
        let f = fs::File::create(dir.join(format!("hist_{name}.csv")))?;
        write_histogram_csv(io::BufWriter::new(f), &histogram(&values, bins), config_hash)?;
    }
    Ok(())
}

/// Writes per-policy `episodes.csv`, `metrics.csv` and histograms under
/// `dir/<policy>/`, plus combined `metrics.csv` and `ttests.csv` in `dir`.
pub fn write_experiment(
    dir: &Path,
    experiments: &[(String, Vec<EpisodeResult>)],
    bins: usize,
    config_hash: &str,
) -> Result<(Vec<MetricsRow>, Vec<TTestRow>), EvalError> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for (name, results) in experiments {
        let pdir = dir.join(name);
        fs::create_dir_all(&pdir)?;
        write_episodes_csv(
            io::BufWriter::new(fs::File::create(pdir.join("episodes.csv"))?),
            results,
            config_hash,
        )?;
        export_distributions(&pdir, results, bins, config_hash)?;
        let row = aggregate(results)?;
        write_metrics_csv(
            io::BufWriter::new(fs::File::create(pdir.join("metrics.csv"))?),
            std::slice::from_ref(&row),
            config_hash,
        )?;
        rows.push(row);
    }
    let tests = rl_ttests(experiments)?;
    write_metrics_csv(
        io::BufWriter::new(fs::File::create(dir.join("metrics.csv"))?),
        &rows,
        config_hash,
    )?;
    write_ttests_csv(
        io::BufWriter::new(fs::File::create(dir.join("ttests.csv"))?),
        &tests,
        config_hash,
    )?;
    Ok((rows, tests))
}
