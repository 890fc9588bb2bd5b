use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lobsim_core::dqn::{self, Checkpoint, CurvePoint, QNetwork, Trainer};
use lobsim_core::eval::{self, EpisodeResult, MetricsRow, PolicySpec, TTestRow};
use lobsim_core::execenv::ExecEnv;
use lobsim_core::market::{kernel_run, NoopObserver, NANOS_PER_SEC};
use lobsim_core::strategies::PolicyKind;

use crate::config::RunConfig;
use crate::{CliError, Command, Common};

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.parallel == 0 {
        return Err(CliError::Usage("--parallel must be >= 1".into()));
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the effective configuration next to the outputs it produced.
fn dump_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("config.toml"))?;
    writeln!(w, "# config_hash={}", cfg.hash())?;
    w.write_all(cfg.to_toml().as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { common, duration } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = common.episodes {
                cfg.simulate.sessions = n;
            }
            if let Some(d) = duration {
                cfg.simulate.duration_secs = d;
            }
            cfg.validate()?;
            simulate(&cfg, &common.out)
        }
        Command::Train { common, lr, resume } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = common.episodes {
                cfg.train.episodes = n;
            }
            cfg.validate()?;
            if lr.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CliError::Usage("--lr values must be finite and >= 0".into()));
            }
            let root = common.out.join(&cfg.experiment).join("train");
            if lr.is_empty() {
                return train(&cfg, &root, resume);
            }
            for v in lr {
                let mut c = cfg.clone();
                c.dqn.lr.start = v;
                train(&c, &root.join(format!("lr_{v:e}")), resume)?;
            }
            Ok(())
        }
        Command::Evaluate {
            common,
            policy,
            checkpoint,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = common.episodes {
                cfg.eval.episodes = n as usize;
            }
            let kinds = parse_policies(&policy)?;
            if kinds.contains(&PolicyKind::Rl) && checkpoint.is_none() {
                return Err(CliError::Usage("policy rl requires --checkpoint".into()));
            }
            cfg.validate()?;
            evaluate(&cfg, &kinds, checkpoint.as_deref(), common.parallel, &common.out)
        }
        Command::Benchmark { common, checkpoint } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = common.episodes {
                cfg.eval.episodes = n as usize;
            }
            cfg.validate()?;
            if cfg.benchmark.cells.is_empty() {
                return Err(CliError::Config("benchmark.cells is empty".into()));
            }
            benchmark(&cfg, checkpoint.as_deref(), common.parallel, &common.out)
        }
    }
}

pub fn parse_policies(arg: &str) -> Result<Vec<PolicyKind>, CliError> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(PolicyKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for part in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: PolicyKind = part.parse().map_err(CliError::Usage)?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    if kinds.is_empty() {
        return Err(CliError::Usage("no policy given".into()));
    }
    kinds.sort();
    Ok(kinds)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dir = out.join(&cfg.experiment).join("simulate");
    dump_config(&dir, cfg)?;
    let hash = cfg.hash();
    let duration = cfg.simulate.duration_secs as i64 * NANOS_PER_SEC;
    for seed in cfg.seed..cfg.seed + cfg.simulate.sessions {
        let log = kernel_run(&cfg.market, seed, duration, &mut NoopObserver).map_err(runtime)?;
        let sdir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&sdir)?;
        let mut w = create(&sdir.join("snapshots.csv"))?;
        writeln!(w, "# config_hash={hash}")?;
        log.write_snapshots_csv(&mut w, cfg.simulate.depth)?;
        w.flush()?;
        let mut w = create(&sdir.join("fills.csv"))?;
        writeln!(w, "# config_hash={hash}")?;
        log.write_fills_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&sdir.join("fundamental.csv"))?;
        writeln!(w, "# config_hash={hash}")?;
        log.write_fundamental_csv(&mut w)?;
        w.flush()?;
        eprintln!(
            "simulate: seed {seed}: {} snapshots, {} fills",
            log.snapshots.len(),
            log.fills.len()
        );
    }
    Ok(())
}

fn write_curve(path: &Path, hash: &str, curve: &[CurvePoint]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let mut w = create(&tmp)?;
    writeln!(w, "# config_hash={hash}")?;
    dqn::write_curve_csv(&mut w, curve)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_curve(path: &Path) -> Result<(String, Vec<CurvePoint>), CliError> {
    let f = BufReader::new(File::open(path)?);
    let mut hash = String::new();
    let mut rows = Vec::new();
    for line in f.lines() {
        let line = line?;
        if let Some(h) = line.strip_prefix("# config_hash=") {
            hash = h.to_string();
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 || cols[0] == "episode" {
            continue;
        }
        let bad = |_| CliError::Runtime(format!("malformed curve row: {line}"));
        rows.push(CurvePoint {
            episode: cols[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            total_reward: cols[1]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            rolling_mean: cols[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
        });
    }
    Ok((hash, rows))
}

fn train(cfg: &RunConfig, dir: &Path, resume: bool) -> Result<(), CliError> {
    let hash = cfg.hash();
    let ckpt_path = dir.join("checkpoint.json");
    let curve_path = dir.join("curve.csv");
    let mut env = ExecEnv::new(cfg.exec.clone(), cfg.venue()).map_err(|e| CliError::Config(e.to_string()))?;
    let (obs_dim, n_actions) = (cfg.exec.obs_dim(), cfg.exec.n_actions());

    let (mut trainer, mut curve) = if resume {
        let ckpt = Checkpoint::load(&ckpt_path).map_err(|e| CliError::Runtime(format!("resume: {e}")))?;
        let (_, mut rows) = read_curve(&curve_path)?;
        let previous = RunConfig::load(Some(&dir.join("config.toml")))?;
        if !same_except_length(&previous, cfg) {
            return Err(CliError::Config(format!(
                "resume: configuration differs from the one that produced {}",
                dir.display()
            )));
        }
        rows.truncate(ckpt.episodes_done as usize);
        (Trainer::resume(cfg.dqn.clone(), ckpt, cfg.seed).map_err(runtime)?, rows)
    } else {
        (
            Trainer::new(cfg.dqn.clone(), obs_dim, n_actions, cfg.seed).map_err(runtime)?,
            Vec::new(),
        )
    };
    dump_config(dir, cfg)?;

    let every = cfg.train.checkpoint_every;
    let mut pending: Vec<CurvePoint> = Vec::new();
    let mut save = |t: &Trainer, point: &CurvePoint, force: bool| -> Result<(), CliError> {
        pending.push(*point);
        if force || point.episode.is_multiple_of(every) {
            curve.append(&mut pending);
            t.checkpoint().save(&ckpt_path).map_err(runtime)?;
            write_curve(&curve_path, &hash, &curve)?;
            eprintln!(
                "train: episode {} reward {:.1} rolling {:.1}",
                point.episode, point.total_reward, point.rolling_mean
            );
        }
        Ok(())
    };
    // `train.episodes` is the total, so a resumed run only tops up.
    let target = cfg.train.episodes;
    while trainer.episodes_done() < target {
        let point = trainer
            .run_episode(&mut env)
            .map_err(|e| CliError::Runtime(format!("{e}; last good checkpoint kept at {}", ckpt_path.display())))?;
        save(&trainer, &point, point.episode == target)?;
    }
    Ok(())
}

fn same_except_length(a: &RunConfig, b: &RunConfig) -> bool {
    let mut a = a.clone();
    a.train.episodes = b.train.episodes;
    a == *b
}

fn load_network(path: &Path, cfg: &RunConfig) -> Result<Arc<QNetwork>, CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Config(e.to_string()))?;
    let net = ckpt.network().map_err(|e| CliError::Config(e.to_string()))?;
    if net.input_dim() != cfg.exec.obs_dim() || net.output_dim() != cfg.exec.n_actions() {
        return Err(CliError::Config(format!(
            "checkpoint layer sizes {:?} do not fit {} inputs and {} actions",
            net.sizes(),
            cfg.exec.obs_dim(),
            cfg.exec.n_actions()
        )));
    }
    Ok(Arc::new(net))
}

fn spec_for(kind: PolicyKind, cfg: &RunConfig, net: Option<&Arc<QNetwork>>) -> PolicySpec {
    match (kind, net) {
        (PolicyKind::Rl, Some(n)) => PolicySpec::Greedy(n.clone()),
        _ => PolicySpec::Baseline(kind, cfg.eval.baselines.clone()),
    }
}

fn print_tables(rows: &[MetricsRow], tests: &[TTestRow]) {
    println!(
        "{:<8} {:>4} {:>12} {:>12} {:>8} {:>14}",
        "policy", "n", "E(IS)", "E(Pen)", "E(T)", "var(IS)"
    );
    for r in rows {
        println!(
            "{:<8} {:>4} {:>12.4} {:>12.4} {:>8.4} {:>14.4}",
            r.policy, r.n, r.mean_is, r.mean_pen, r.mean_t, r.var_is
        );
    }
    for t in tests {
        println!(
            "t-test {} > {}: t = {:.4}, df = {}, critical = {:.4}, reject H0 = {}",
            t.policy_a, t.policy_b, t.result.t, t.result.df, t.result.critical, t.result.reject
        );
    }
}

fn evaluate(
    cfg: &RunConfig,
    kinds: &[PolicyKind],
    checkpoint: Option<&Path>,
    parallel: usize,
    out: &Path,
) -> Result<(), CliError> {
    let net = match checkpoint {
        Some(p) if kinds.contains(&PolicyKind::Rl) => Some(load_network(p, cfg)?),
        _ => None,
    };
    let dir = out.join(&cfg.experiment);
    dump_config(&dir, cfg)?;
    let hash = cfg.hash();
    let seeds = eval::eval_seeds(cfg.seed, cfg.eval.episodes);
    let venue = cfg.venue();
    let mut experiments: Vec<(String, Vec<EpisodeResult>)> = Vec::new();
    for &kind in kinds {
        let spec = spec_for(kind, cfg, net.as_ref());
        let results = eval::run_experiment(&spec, &cfg.exec, &venue, &seeds, parallel).map_err(runtime)?;
        eprintln!("evaluate: {kind}: {} episodes", results.len());
        // Step-level trace of the first seed for plotting.
        let pdir = dir.join(kind.as_str());
        fs::create_dir_all(&pdir)?;
        let mut env = ExecEnv::new(cfg.exec.clone(), venue.clone()).map_err(runtime)?;
        let mut policy = spec.build(&cfg.exec).map_err(runtime)?;
        let summary = eval::run_episode(&mut env, policy.as_mut(), seeds[0]).map_err(runtime)?;
        let mut w = create(&pdir.join("trace.csv"))?;
        writeln!(w, "# config_hash={hash}")?;
        summary.write_trace_csv(&mut w)?;
        w.flush()?;
        if let (PolicyKind::Rl, Some(n)) = (kind, net.as_ref()) {
            let observations = replay_observations(cfg, &summary, seeds[0], n)?;
            let trace = dqn::q_value_trace(n, &observations).map_err(runtime)?;
            let mut w = create(&pdir.join("q_trace.csv"))?;
            writeln!(w, "# config_hash={hash}")?;
            dqn::write_q_trace_csv(&mut w, &trace)?;
            w.flush()?;
        }
        experiments.push((kind.as_str().to_string(), results));
    }
    let (rows, tests) = eval::write_experiment(&dir, &experiments, cfg.eval.bins, &hash).map_err(runtime)?;
    print_tables(&rows, &tests);
    Ok(())
}

/// Observations seen by the greedy policy on `seed`, one per step taken.
fn replay_observations(
    cfg: &RunConfig,
    summary: &lobsim_core::execenv::EpisodeSummary,
    seed: u64,
    net: &Arc<QNetwork>,
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut env = ExecEnv::new(cfg.exec.clone(), cfg.venue()).map_err(runtime)?;
    let mut obs = env.reset(seed).map_err(runtime)?;
    let mut all = Vec::with_capacity(summary.steps_taken);
    while !env.is_done() {
        let q = net.forward(&obs).map_err(runtime)?;
        all.push(obs);
        obs = env
            .step(lobsim_core::execenv::ExecAction(dqn::argmax(&q)))
            .map_err(runtime)?
            .observation;
    }
    Ok(all)
}

fn benchmark(cfg: &RunConfig, checkpoint: Option<&Path>, parallel: usize, out: &Path) -> Result<(), CliError> {
    let net = checkpoint.map(|p| load_network(p, cfg)).transpose()?;
    let mut policies = Vec::new();
    if let Some(n) = &net {
        policies.push(PolicySpec::Greedy(n.clone()));
    } else {
        eprintln!("benchmark: no --checkpoint, running baselines only");
    }
    for kind in [PolicyKind::Twap, PolicyKind::Passive, PolicyKind::Random] {
        policies.push(spec_for(kind, cfg, None));
    }
    let dir: PathBuf = out.join(&cfg.experiment).join("benchmark");
    dump_config(&dir, cfg)?;
    let hash = cfg.hash();
    let seeds = eval::eval_seeds(cfg.seed, cfg.eval.episodes);
    let outcomes = eval::sweep(
        &cfg.benchmark.cells,
        &policies,
        &cfg.exec,
        &cfg.venue(),
        &seeds,
        parallel,
        cfg.eval.bins,
        Some((&dir, &hash)),
    );
    let mut failed = 0;
    for o in &outcomes {
        println!(
            "== {} (noise {}, momentum {})",
            o.cell.table, o.cell.n_noise, o.cell.n_momentum
        );
        match &o.result {
            Ok(r) => print_tables(&r.metrics, &r.ttests),
            Err(e) => {
                failed += 1;
                println!("failed: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} benchmark cell(s) failed")));
    }
    Ok(())
}
