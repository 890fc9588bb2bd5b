use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_experiment, write_experiment, EpisodeResult, EvalError, MetricsRow, PolicySpec, TTestRow};
use crate::execenv::{ExecConfig, SimVenueFactory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    /// Table the cell belongs to, e.g. `noise` or `momentum`.
    pub table: String,
    pub n_noise: u32,
    pub n_momentum: u32,
}

impl SweepCell {
    pub fn label(&self) -> String {
        format!("{}_noise{}_momentum{}", self.table, self.n_noise, self.n_momentum)
    }
}

/// Noise ∈ {10, 1000, 2000} at 12 momentum, then momentum ∈ {6, 12, 24} at 1000 noise.
pub fn default_grid() -> Vec<SweepCell> {
    let noise = [10, 1000, 2000].map(|n| SweepCell {
        table: "noise".into(),
        n_noise: n,
        n_momentum: 12,
    });
    let momentum = [6, 12, 24].map(|m| SweepCell {
        table: "momentum".into(),
        n_noise: 1000,
        n_momentum: m,
    });
    noise.into_iter().chain(momentum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub metrics: Vec<MetricsRow>,
    pub ttests: Vec<TTestRow>,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: SweepCell,
    pub result: Result<CellResult, EvalError>,
}

/// Runs every policy in every cell. A failing cell is reported and the
/// remaining cells still run. With `out`, each cell is written to
/// `out/<label>/` as soon as it completes, followed by `summary.csv`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    cells: &[SweepCell],
    policies: &[PolicySpec],
    exec: &ExecConfig,
    base: &SimVenueFactory,
    seeds: &[u64],
    parallel: usize,
    bins: usize,
    out: Option<(&Path, &str)>,
) -> Vec<CellOutcome> {
    let mut outcomes = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut factory = base.clone();
        factory.market.population.n_noise = cell.n_noise;
        factory.market.population.n_momentum = cell.n_momentum;
        let run = || -> Result<CellResult, EvalError> {
            let mut experiments: Vec<(String, Vec<EpisodeResult>)> = Vec::new();
            for p in policies {
                experiments.push((
                    p.name().to_string(),
                    run_experiment(p, exec, &factory, seeds, parallel)?,
                ));
            }
            let (metrics, ttests) = match out {
                Some((dir, hash)) => write_experiment(&dir.join(cell.label()), &experiments, bins, hash)?,
                None => {
                    let metrics = experiments
                        .iter()
                        .map(|(_, r)| super::aggregate(r))
                        .collect::<Result<_, _>>()?;
                    (metrics, super::rl_ttests(&experiments)?)
                }
            };
            Ok(CellResult { metrics, ttests })
        };
        outcomes.push(CellOutcome {
            cell: cell.clone(),
            result: run(),
        });
    }
    if let Some((dir, hash)) = out {
        let written = fs::create_dir_all(dir)
            .and_then(|_| fs::File::create(dir.join("summary.csv")))
            .and_then(|f| write_sweep_summary(io::BufWriter::new(f), &outcomes, hash));
        if let Err(e) = written {
            outcomes.push(CellOutcome {
                cell: SweepCell {
                    table: "summary".into(),
                    n_noise: 0,
                    n_momentum: 0,
                },
                result: Err(e.into()),
            });
        }
    }
    outcomes
}

/// One block per cell: metrics rows, then t-test rows, with failures noted.
pub fn write_sweep_summary<W: Write>(mut w: W, outcomes: &[CellOutcome], config_hash: &str) -> io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(
        w,
        "table,n_noise,n_momentum,row,policy,n,E(IS),E(Pen),E(T),σ²(IS),vs,t,df,critical,reject,error"
    )?;
    for o in outcomes {
        let c = &o.cell;
        let prefix = format!("{},{},{}", c.table, c.n_noise, c.n_momentum);
        match &o.result {
            Ok(r) => {
                for m in &r.metrics {
                    writeln!(
                        w,
                        "{prefix},metrics,{},{},{},{},{},{},,,,,,",
                        m.policy, m.n, m.mean_is, m.mean_pen, m.mean_t, m.var_is
                    )?;
                }
                for t in &r.ttests {
                    writeln!(
                        w,
                        "{prefix},ttest,{},{},,,,,{},{},{},{},{},",
                        t.policy_a, t.n_a, t.policy_b, t.result.t, t.result.df, t.result.critical, t.result.reject
                    )?;
                }
            }
            Err(e) => writeln!(w, "{prefix},error,,,,,,,,,,,,\"{}\"", e.to_string().replace('"', "'"))?,
        }
    }
    Ok(())
}
