//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --release --test acceptance`;
//! pass criterion numbers as arguments to run a subset.

#[path = "../../core/tests/support/brute.rs"]
mod brute;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lobsim_core::dqn::{self, DqnConfig, QNetwork, Sample, Trainer};
use lobsim_core::eval::{self, stats, EpisodeResult, PolicySpec};
use lobsim_core::execenv::{
    ConstantVenueFactory, EnvError, ExecAction, ExecConfig, ExecEnv, SimVenueFactory, Venue, VenueFactory,
    EXEC_AGENT_ID,
};
use lobsim_core::lob::{imbalance, BookSnapshot, MarketOutcome, Nanos, Order, OrderBook, Price, Side};
use lobsim_core::market::fundamental::{fundamental_step, FundamentalParams};
use lobsim_core::market::MarketConfig;
use lobsim_core::strategies::{baseline, BaselineParams, PolicyKind, Stochastic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("LOB matches brute-force matcher", lob_oracle),
        ("microstructure formulas", microstructure),
        ("OU moments", ou_moments),
        ("gradient check", gradient_check),
        ("reward contract", reward_contract),
        ("TWAP closed form", twap_closed_form),
        ("learning sanity on toy venue", learning_sanity),
        ("lite-market benchmark ordering", lite_benchmark),
        ("CLI determinism", cli_determinism),
        ("t-test oracle", ttest_oracle),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn lob_oracle() -> Outcome {
    const N: u64 = 10_000;
    let start = Instant::now();
    for seed in 0..N {
        let ops = brute::random_ops(seed, 50);
        let (engine, brute) = (brute::run_engine(&ops), brute::run_brute(&ops));
        check(engine == brute, format!("sequence {seed} diverges"))?;
        if let (Some(b), Some(a)) = (engine.1 .0.first(), engine.1 .1.first()) {
            check(b.0 < a.0, format!("sequence {seed} leaves a crossed book"))?;
        }
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("took {took:?}, limit 60s"))?;
    Ok(format!("{N} sequences identical in {:.2}s", took.as_secs_f64()))
}

fn microstructure() -> Outcome {
    for seed in 0..1_000u64 {
        let book = brute::random_book(seed, 10);
        let snap = book.snapshot(10);
        for k in 1..=10 {
            let bid: u64 = snap.bids.iter().take(k).map(|l| l.1).sum();
            let ask: u64 = snap.asks.iter().take(k).map(|l| l.1).sum();
            check(
                book.total_depth(Side::Bid, k) == Ok(bid),
                format!("book {seed}: bid depth k={k}"),
            )?;
            check(
                book.total_depth(Side::Ask, k) == Ok(ask),
                format!("book {seed}: ask depth k={k}"),
            )?;
            let v = book.volume_imbalance(Side::Bid, k).unwrap();
            // Exact: the engine's value is the correctly rounded quotient.
            let expected = if bid + ask == 0 {
                0.5
            } else {
                bid as f64 / (bid + ask) as f64
            };
            check(v == expected, format!("book {seed}: imbalance k={k}"))?;
            let other = book.volume_imbalance(Side::Ask, k).unwrap();
            if bid + ask > 0 {
                check(
                    v + other == 1.0 || (v + other - 1.0).abs() <= f64::EPSILON,
                    format!("book {seed}: sides"),
                )?;
            }
        }
        if let (Some(b), Some(a)) = (snap.bids.first(), snap.asks.first()) {
            check(book.spread() == Some(a.0 .0 - b.0 .0), format!("book {seed}: spread"))?;
            check(book.mid_x2() == Some(a.0 .0 + b.0 .0), format!("book {seed}: mid"))?;
            check(
                book.mid_price() == Some((a.0 .0 + b.0 .0) as f64 / 2.0),
                format!("book {seed}: mid"),
            )?;
        }
    }
    let mut sym = OrderBook::default();
    for i in 0..5i64 {
        for (side, px) in [(Side::Bid, 99 - i), (Side::Ask, 101 + i)] {
            let id = sym.next_order_id();
            sym.submit_limit(Order::limit(id, 0, side, Price(px), 7 + i as u64, 0))
                .unwrap();
        }
    }
    for k in 1..=5 {
        check(
            sym.volume_imbalance(Side::Bid, k) == Ok(0.5),
            "symmetric book imbalance",
        )?;
    }
    check(imbalance(0, 0) == 0.5, "empty book imbalance")?;
    Ok("1000 books exact; symmetric book gives 0.5".into())
}

fn ou_moments() -> Outcome {
    const STEPS: usize = 100_000;
    const BURN_IN: usize = 2_000;
    let dt: Nanos = 1_000_000_000;
    let theta = 0.01 / 1e9;
    let target_var = 1e4; // stationary sd of 100 cents
    let p = FundamentalParams {
        theta,
        mu: 100_000.0,
        sigma: (2.0 * theta * target_var).sqrt(),
        lambda: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let mut x = p.mu;
    for _ in 0..BURN_IN {
        x = fundamental_step(x, dt, &p, &mut rng);
    }
    let xs: Vec<f64> = (0..STEPS)
        .map(|_| {
            x = fundamental_step(x, dt, &p, &mut rng);
            x
        })
        .collect();
    let n = STEPS as f64;
    let mean = stats::mean(&xs);
    let var = stats::sample_variance(&xs);
    // Sampled every dt the process is AR(1) with this coefficient.
    let phi = (-theta * dt as f64).exp();
    let se_mean = (target_var / n * (1.0 + phi) / (1.0 - phi)).sqrt();
    let se_var = (2.0 * target_var * target_var / n * (1.0 + phi * phi) / (1.0 - phi * phi)).sqrt();
    let (zm, zv) = ((mean - p.mu) / se_mean, (var - target_var) / se_var);
    let detail = format!("mean z={zm:.2}, variance z={zv:.2} (var {var:.1} vs {target_var})");
    check(zm.abs() < 3.0 && zv.abs() < 3.0, detail.clone())?;
    Ok(detail)
}

fn gradient_check() -> Outcome {
    const H: f64 = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [36, 50, 20, 5];
        let net = QNetwork::random(&sizes, &mut rng);
        let states: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..36).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let batch: Vec<Sample> = states
            .iter()
            .map(|s| Sample {
                state: s,
                action: rng.random_range(0..5),
                target: rng.random_range(-3.0..3.0),
            })
            .collect();
        let (_, analytic) = net.loss_and_grad(&batch).map_err(|e| e.to_string())?;
        let mut numeric = vec![0.0; analytic.len()];
        let mut probe = net.clone();
        for i in 0..numeric.len() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + H;
            let up = probe.loss(&batch);
            probe.params_mut()[i] = orig - H;
            let down = probe.loss(&batch);
            probe.params_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * H);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&analytic) + norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
        check(rel < 1e-4, format!("net {seed}: relative error {rel:e}"))?;
    }
    Ok(format!("20 nets, worst relative error {worst:.2e}"))
}

/// Venue that replays a fixed list of books, one per step.
struct Scripted {
    books: Vec<OrderBook>,
    idx: usize,
    now: Nanos,
}

struct ScriptedFactory(Vec<Vec<(Side, i64, u64)>>);

impl VenueFactory for ScriptedFactory {
    type Venue = Scripted;
    fn open(&self, _seed: u64, _horizon: Nanos) -> Result<Scripted, EnvError> {
        let books = self
            .0
            .iter()
            .map(|levels| {
                let mut b = OrderBook::default();
                for &(side, px, q) in levels {
                    let id = b.next_order_id();
                    b.submit_limit(Order::limit(id, 0, side, Price(px), q, 0)).unwrap();
                }
                b
            })
            .collect();
        Ok(Scripted { books, idx: 0, now: 0 })
    }
}

impl Venue for Scripted {
    fn now(&self) -> Nanos {
        self.now
    }
    fn snapshot(&self) -> BookSnapshot {
        self.books[self.idx].snapshot(10)
    }
    fn reference_price(&mut self) -> Option<f64> {
        self.books[self.idx].mid_price()
    }
    fn execute_market(&mut self, side: Side, qty: u64) -> MarketOutcome {
        self.books[self.idx]
            .submit_market(side, qty, EXEC_AGENT_ID, self.now)
            .unwrap()
    }
    fn advance(&mut self, dt: Nanos) {
        self.now += dt;
        self.idx = (self.idx + 1).min(self.books.len() - 1);
    }
}

fn substitution_cases() -> Result<(), String> {
    let cfg = ExecConfig {
        parent_size: 1000,
        time_window_secs: 100,
        ..Default::default()
    };
    // Arrival mid 10000, then 20 shares at 9998 and 10000: ΔP = 1, one level crossed.
    let books = vec![
        vec![(Side::Bid, 9_990, 100), (Side::Ask, 10_010, 100)],
        vec![(Side::Bid, 9_990, 100), (Side::Ask, 9_998, 10), (Side::Ask, 10_000, 10)],
    ];
    let mut env = ExecEnv::new(cfg.clone(), ScriptedFactory(books)).map_err(|e| e.to_string())?;
    env.reset(0).map_err(|e| e.to_string())?;
    env.step(ExecAction(0)).map_err(|e| e.to_string())?;
    let out = env.step(ExecAction(1)).map_err(|e| e.to_string())?;
    check(
        out.reward == 18.0,
        format!("Q=20, ΔP=1, d=1 gave {} not 18", out.reward),
    )?;

    // Same fill bought one tick worse than arrival with no level crossed.
    let books = vec![
        vec![(Side::Bid, 9_990, 100), (Side::Ask, 10_010, 100)],
        vec![(Side::Bid, 9_990, 100), (Side::Ask, 10_001, 50)],
    ];
    let mut env = ExecEnv::new(cfg, ScriptedFactory(books)).map_err(|e| e.to_string())?;
    env.reset(0).map_err(|e| e.to_string())?;
    env.step(ExecAction(0)).map_err(|e| e.to_string())?;
    let out = env.step(ExecAction(1)).map_err(|e| e.to_string())?;
    check(
        out.reward == -20.0,
        format!("Q=20, ΔP=-1, d=0 gave {} not -20", out.reward),
    )?;
    Ok(())
}

fn reward_contract() -> Outcome {
    substitution_cases()?;
    let market = MarketConfig::lite();
    let factory = SimVenueFactory {
        market,
        warmup_secs: 30,
    };
    let params = BaselineParams::default();
    let mut completed_early = 0;
    for ep in 0..1_000u64 {
        let cfg = ExecConfig {
            parent_size: 200,
            time_window_secs: 30,
            terminate_on_completion: ep % 2 == 0,
            ..Default::default()
        };
        let mut env = ExecEnv::new(cfg.clone(), factory.clone()).map_err(|e| e.to_string())?;
        let mut policy = Stochastic::random(&params, cfg.n_actions());
        use lobsim_core::strategies::Policy;
        policy.begin_episode(ep);
        let mut obs = env.reset(ep).map_err(|e| e.to_string())?;
        let p0 = env.summary().unwrap().arrival_price;
        let (mut executed, mut total) = (0u64, 0.0);
        let mut done_at = None;
        let mut step = 0;
        while !env.is_done() {
            let a = policy.act(step, &obs);
            let out = env.step(a).map_err(|e| e.to_string())?;
            let i = &out.info;
            let sum = i.shortfall_term + i.depth_term + i.terminal_term + i.over_exec_term;
            check(
                (out.reward - sum).abs() <= 1e-9,
                format!("episode {ep} step {step}: decomposition"),
            )?;
            let expected_is = i.filled as f64 * p0 - i.notional as f64;
            check(
                (i.shortfall_term - expected_is).abs() <= 1e-9,
                format!("episode {ep} step {step}: shortfall"),
            )?;
            check(
                i.depth_term == -cfg.alpha * i.depth_consumed as f64,
                format!("episode {ep}: depth term"),
            )?;
            check(i.filled <= i.requested, format!("episode {ep}: overfilled child"))?;
            executed += i.filled;
            check(i.executed == executed, format!("episode {ep} step {step}: executed"))?;
            check(
                i.inventory == cfg.parent_size.saturating_sub(executed),
                format!("episode {ep}: inventory"),
            )?;
            if done_at.is_some() {
                check(
                    out.reward == 0.0 && i.filled == 0,
                    format!("episode {ep} step {step}: nonzero after done"),
                )?;
            }
            if done_at.is_none() && executed >= cfg.parent_size {
                done_at = Some(step);
            }
            total += out.reward;
            obs = out.observation;
            step += 1;
        }
        let s = env.summary().unwrap();
        check(
            (s.reward_total - total).abs() <= 1e-9,
            format!("episode {ep}: total reward"),
        )?;
        check(s.completion_step == done_at, format!("episode {ep}: completion step"))?;
        if done_at.is_some() && step < s.n_steps {
            completed_early += 1;
        }
        if done_at.is_none() {
            let last = s.trace.last().unwrap();
            let expected = -cfg.beta * last.inventory as f64;
            check(
                last.terminal_term == expected,
                format!("episode {ep}: terminal penalty"),
            )?;
        }
    }
    Ok(format!(
        "1000 episodes consistent ({completed_early} completed early); 18 and -20 substitution cases exact"
    ))
}

fn twap_closed_form() -> Outcome {
    let cfg = ExecConfig::default();
    let factory = ConstantVenueFactory::default();
    let half_spread = (factory.best_ask - factory.best_bid) as f64 / 2.0;
    let mut env = ExecEnv::new(cfg.clone(), factory).map_err(|e| e.to_string())?;
    let mut twap = baseline(PolicyKind::Twap, &cfg, &BaselineParams::default()).unwrap();
    let s = eval::run_episode(&mut env, twap.as_mut(), 1).map_err(|e| e.to_string())?;
    let children = s.trace.iter().filter(|i| i.filled > 0).count();
    let is = s.normalized_is();
    check(
        (is + half_spread).abs() <= 1e-9,
        format!("normalized IS {is}, expected {}", -half_spread),
    )?;
    check(children == 1000, format!("{children} child orders"))?;
    check(s.executed == cfg.parent_size, format!("executed {}", s.executed))?;
    Ok(format!("IS {is} per share, {children} children"))
}

fn learning_sanity() -> Outcome {
    let cfg = ExecConfig {
        parent_size: 2000,
        time_window_secs: 180,
        ..Default::default()
    };
    // The reference DQN bootstraps from the online net. With the learning
    // rate gone after 9k gradient steps a lagged target cannot carry the
    // terminal penalty back across 180 steps.
    let dqn_cfg = DqnConfig {
        target_sync: 0,
        ..DqnConfig::default()
    }
    .scaled(10);
    let mut env = ExecEnv::new(cfg.clone(), ConstantVenueFactory::default()).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(dqn_cfg, cfg.obs_dim(), cfg.n_actions(), 11).map_err(|e| e.to_string())?;
    let curve = trainer
        .train(&mut env, 400, &mut |_, _| Ok(()))
        .map_err(|e| e.to_string())?;
    let mean = |c: &[dqn::CurvePoint]| c.iter().map(|p| p.total_reward).sum::<f64>() / c.len() as f64;
    let (first, last) = (mean(&curve[..100]), mean(&curve[curve.len() - 100..]));
    let net = Arc::new(trainer.into_network());
    let seeds = eval::eval_seeds(99, 50);
    let res = eval::run_experiment(
        &PolicySpec::Greedy(net),
        &cfg,
        &ConstantVenueFactory::default(),
        &seeds,
        4,
    )
    .map_err(|e| e.to_string())?;
    let done = res.iter().filter(|r| r.executed >= cfg.parent_size).count();
    let detail = format!("first-100 mean {first:.1}, last-100 mean {last:.1}, {done}/50 held-out seeds completed");
    check(last > first, detail.clone())?;
    check(done * 100 >= 95 * 50, detail.clone())?;
    Ok(detail)
}

fn lite_benchmark() -> Outcome {
    let cfg = ExecConfig {
        parent_size: 2000,
        time_window_secs: 300,
        ..Default::default()
    };
    let factory = SimVenueFactory {
        market: MarketConfig::lite(),
        warmup_secs: 120,
    };
    let mut env = ExecEnv::new(cfg.clone(), factory.clone()).map_err(|e| e.to_string())?;
    let mut trainer =
        Trainer::new(DqnConfig::default(), cfg.obs_dim(), cfg.n_actions(), 5).map_err(|e| e.to_string())?;
    trainer
        .train(&mut env, 400, &mut |_, _| Ok(()))
        .map_err(|e| e.to_string())?;
    let net = Arc::new(trainer.into_network());

    let seeds = eval::eval_seeds(2024, 50);
    let params = BaselineParams::default();
    let specs = [
        PolicySpec::Greedy(net),
        PolicySpec::Baseline(PolicyKind::Twap, params.clone()),
        PolicySpec::Baseline(PolicyKind::Passive, params.clone()),
        PolicySpec::Baseline(PolicyKind::Random, params),
    ];
    let mut experiments: Vec<(String, Vec<EpisodeResult>)> = Vec::new();
    for s in &specs {
        let r = eval::run_experiment(s, &cfg, &factory, &seeds, 4).map_err(|e| e.to_string())?;
        experiments.push((s.name().to_string(), r));
    }
    let rows: Vec<_> = experiments
        .iter()
        .map(|(_, r)| eval::aggregate(r))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let tests = eval::rl_ttests(&experiments).map_err(|e| e.to_string())?;
    println!("     {}", eval::METRICS_HEADER);
    for r in &rows {
        println!(
            "     {},{},{:.3},{:.3},{:.4},{:.1}",
            r.policy, r.n, r.mean_is, r.mean_pen, r.mean_t, r.var_is
        );
    }
    for t in &tests {
        println!(
            "     t-test rl > {}: t={:.3} df={} critical={:.4} reject={}",
            t.policy_b, t.result.t, t.result.df, t.result.critical, t.result.reject
        );
    }
    let row = |name: &str| rows.iter().find(|r| r.policy == name).unwrap();
    check(tests.len() == 3, "expected three t-tests")?;
    for t in &tests {
        check(t.result.df == 98, format!("df {}", t.result.df))?;
        check(
            (t.result.critical - 1.660).abs() <= 1e-3,
            format!("critical {}", t.result.critical),
        )?;
    }
    let (rl, twap, random) = (row("rl"), row("twap"), row("random"));
    check(twap.mean_t >= 0.99, format!("E(T) TWAP {:.4} < 0.99", twap.mean_t))?;
    check(
        rl.mean_is >= random.mean_is,
        format!("RL IS {:.3} < Random IS {:.3}", rl.mean_is, random.mean_is),
    )?;
    let soft = if rl.mean_is >= twap.mean_is {
        "holds"
    } else {
        "does not hold"
    };
    Ok(format!(
        "E(T) TWAP {:.4}; IS rl {:.3} >= random {:.3}; soft RL >= TWAP ({:.3}) {soft}",
        twap.mean_t, rl.mean_is, random.mean_is, twap.mean_is
    ))
}

const CLI_CONFIG: &str = r#"
preset = "lite"
experiment = "det"
warmup_secs = 30

[exec]
parent_size = 400
time_window_secs = 60

[train]
episodes = 3
checkpoint_every = 2

[eval]
episodes = 8
bins = 6

[[benchmark.cells]]
table = "noise"
n_noise = 60
n_momentum = 2
"#;

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_lobsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    check(
        o.status.success(),
        format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)),
    )
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, CLI_CONFIG).map_err(|e| e.to_string())?;
    let c = cfg.to_str().unwrap();
    let runs = [tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c")];
    for (i, out) in runs.iter().enumerate() {
        let par = if i == 0 { "1" } else { "4" };
        run_cli(out, &["simulate", "--config", c, "--duration", "60", "--episodes", "2"])?;
        run_cli(out, &["train", "--config", c, "--parallel", par])?;
        let ckpt = out.join("det/train/checkpoint.json");
        let ckpt = ckpt.to_str().unwrap();
        run_cli(
            out,
            &["evaluate", "--config", c, "--checkpoint", ckpt, "--parallel", par],
        )?;
        run_cli(
            out,
            &["benchmark", "--config", c, "--checkpoint", ckpt, "--parallel", par],
        )?;
    }
    let files = files_under(&runs[0]);
    let csvs = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "csv"))
        .count();
    check(csvs > 20, format!("only {csvs} CSVs written"))?;
    for other in &runs[1..] {
        check(files_under(other) == files, "different file sets")?;
    }
    for f in &files {
        let a = fs::read(runs[0].join(f)).map_err(|e| e.to_string())?;
        for other in &runs[1..] {
            let b = fs::read(other.join(f)).map_err(|e| e.to_string())?;
            check(a == b, format!("{} differs", f.display()))?;
        }
    }
    Ok(format!(
        "{} files ({csvs} CSVs) byte-identical over 3 runs, --parallel 1 and 4",
        files.len()
    ))
}

fn ttest_oracle() -> Outcome {
    // x̄=13, ȳ=10, both sample variances 2.5: sp²=2.5, se=1, t=3.
    let a = [12.0, 14.0, 11.0, 15.0, 13.0];
    let b = [10.0, 9.0, 12.0, 11.0, 8.0];
    let r = stats::pooled_t_test(&a, &b).map_err(|e| e.to_string())?;
    check((r.t - 3.0).abs() <= 1e-9, format!("t = {}", r.t))?;
    check(r.df == 8, format!("df = {}", r.df))?;
    check(
        (r.critical - 1.859_548).abs() <= 1e-6,
        format!("critical = {}", r.critical),
    )?;
    check(r.reject, "should reject at 5%")?;

    // Unequal sizes: x̄=3, ȳ=6; SS 10 and 2 over df 6 → sp²=2, se²=2(1/5+1/3)=16/15.
    let (c, d) = ([1.0, 2.0, 3.0, 4.0, 5.0], [5.0, 6.0, 7.0]);
    let r = stats::pooled_t_test(&c, &d).map_err(|e| e.to_string())?;
    let expected = -3.0 / (16.0f64 / 15.0).sqrt();
    check(
        (r.t - expected).abs() <= 1e-9,
        format!("t = {}, expected {expected}", r.t),
    )?;
    check(!r.reject, "negative t must not reject")?;

    let same = stats::pooled_t_test(&a, &a).map_err(|e| e.to_string())?;
    check(
        same.t == 0.0 && !same.reject,
        format!("identical samples gave t = {}", same.t),
    )?;
    Ok(format!(
        "t = 3 (df 8), t = {expected:.6} (df 6), identical samples t = 0"
    ))
}
