//! Optimal-execution environment layered on a market venue.
//!
//! The agent works a parent order of `X0` shares over `N = T / step` steps.
//! Each step it either waits or sends a market order of `q_min · k` shares.
//! Per-step reward for a buy:
//!
//! ```text
//! r_t = filled_t · (P0 − P_t) − α·d_t − β·I_T·1{t = T} − over_exec_penalty · excess_t
//! ```
//!
//! with the shortfall sign flipped for a sell. `P0` is the mid at episode
//! start, `P_t` the average fill price and `d_t` the depth consumed.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{AgentId, BookSnapshot, DepthMetric, MarketOutcome, Nanos, Order, OrderBook, Price, Side};
use crate::market::{Kernel, MarketConfig, MarketError, NoopObserver, NANOS_PER_SEC};

/// Agent id used for the execution agent's own orders.
pub const EXEC_AGENT_ID: AgentId = u32::MAX;
/// Features per observation frame.
pub const FRAME_LEN: usize = 9;
pub const IMBALANCE_LEVELS: usize = 5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid execution config: {0}")]
    Config(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("step called after the episode finished")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("action index {0} out of range")]
    InvalidAction(usize),
    #[error("no arrival price: market has no quotes, trades or reference value")]
    NoArrivalPrice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Buy,
    Sell,
}

impl Direction {
    pub fn side(self) -> Side {
        match self {
            Direction::Buy => Side::Bid,
            Direction::Sell => Side::Ask,
        }
    }
}

/// How best bid/ask enter the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuoteMode {
    /// Distance from the arrival price in basis points.
    #[default]
    Relative,
    /// Price in ticks.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecConfig {
    pub parent_size: u64,
    pub direction: Direction,
    pub time_window_secs: u64,
    pub step_secs: u64,
    pub q_min: u64,
    pub n_size_actions: u32,
    /// Depth-penalty weight α.
    pub alpha: f64,
    /// Terminal penalty β per unexecuted share.
    pub beta: f64,
    pub over_exec_penalty: f64,
    pub history_len: usize,
    pub market_buffer_len: usize,
    pub quote_mode: QuoteMode,
    pub depth_metric: DepthMetric,
    /// End the episode as soon as the parent order is complete. When false the
    /// episode runs to `T` with forced no-ops and zero reward after completion.
    pub terminate_on_completion: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            parent_size: 20_000,
            direction: Direction::Buy,
            time_window_secs: 1800,
            step_secs: 1,
            q_min: 20,
            n_size_actions: 4,
            alpha: 2.0,
            beta: 5.0,
            over_exec_penalty: 5.0,
            history_len: 4,
            market_buffer_len: 50,
            quote_mode: QuoteMode::Relative,
            depth_metric: DepthMetric::Levels,
            terminate_on_completion: true,
        }
    }
}

impl ExecConfig {
    pub fn n_steps(&self) -> usize {
        (self.time_window_secs / self.step_secs.max(1)) as usize
    }

    pub fn n_actions(&self) -> usize {
        self.n_size_actions as usize + 1
    }

    pub fn obs_dim(&self) -> usize {
        FRAME_LEN * self.history_len
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.parent_size == 0 || self.q_min == 0 || self.n_size_actions == 0 {
            return fail("parent_size, q_min and n_size_actions must be positive");
        }
        if self.step_secs == 0 || self.time_window_secs == 0 || !self.time_window_secs.is_multiple_of(self.step_secs) {
            return fail("time_window_secs must be a positive multiple of step_secs");
        }
        let capacity = self.q_min as u128 * self.n_size_actions as u128 * self.n_steps() as u128;
        if capacity < self.parent_size as u128 {
            return fail("infeasible: q_min * n_size_actions * steps < parent_size");
        }
        if self.history_len == 0 || self.market_buffer_len == 0 {
            return fail("history_len and market_buffer_len must be positive");
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("over_exec_penalty", self.over_exec_penalty),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnvError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Index 0 waits; `k >= 1` sends a market order of `q_min · k` shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecAction(pub usize);

impl ExecAction {
    pub const WAIT: ExecAction = ExecAction(0);
}

// ---------------------------------------------------------------------------
// Venues

/// What the environment needs from a market.
pub trait Venue {
    fn now(&self) -> Nanos;
    fn snapshot(&self) -> BookSnapshot;
    /// Mid if available, else a venue-specific fallback.
    fn reference_price(&mut self) -> Option<f64>;
    fn execute_market(&mut self, side: Side, qty: u64) -> MarketOutcome;
    fn advance(&mut self, dt: Nanos);
}

/// Opens a fresh venue per episode; `horizon` is the execution window length.
pub trait VenueFactory: Send + Sync {
    type Venue: Venue;
    fn open(&self, seed: u64, horizon: Nanos) -> Result<Self::Venue, EnvError>;
}

/// A live agent-based market session, warmed up before execution starts.
pub struct SimVenue {
    kernel: Kernel,
}

impl SimVenue {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
}

impl Venue for SimVenue {
    fn now(&self) -> Nanos {
        self.kernel.now()
    }
    fn snapshot(&self) -> BookSnapshot {
        self.kernel.snapshot()
    }
    fn reference_price(&mut self) -> Option<f64> {
        if let Some(m) = self.kernel.book().mid_price() {
            return Some(m);
        }
        if let Some(p) = self.kernel.last_trade() {
            return Some(p.0 as f64);
        }
        let now = self.kernel.now();
        Some(self.kernel.oracle_mut().fundamental_at(now))
    }
    fn execute_market(&mut self, side: Side, qty: u64) -> MarketOutcome {
        self.kernel.execute_market(side, qty, EXEC_AGENT_ID)
    }
    fn advance(&mut self, dt: Nanos) {
        let t = self.kernel.now() + dt;
        self.kernel.run_until(t, &mut NoopObserver);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimVenueFactory {
    pub market: MarketConfig,
    /// Seconds of background trading before the execution window opens.
    pub warmup_secs: u64,
}

impl Default for SimVenueFactory {
    fn default() -> Self {
        SimVenueFactory {
            market: MarketConfig::default(),
            warmup_secs: 120,
        }
    }
}

impl VenueFactory for SimVenueFactory {
    type Venue = SimVenue;
    fn open(&self, seed: u64, horizon: Nanos) -> Result<SimVenue, EnvError> {
        let start = self.warmup_secs as Nanos * NANOS_PER_SEC;
        let mut kernel = Kernel::new(self.market.clone(), seed, start + horizon)?;
        kernel.run_until(start, &mut NoopObserver);
        Ok(SimVenue { kernel })
    }
}

/// Synthetic market whose ladder is restored after every trade: constant
/// quotes with fixed depth per level.
#[derive(Debug, Clone)]
pub struct ConstantVenue {
    template: OrderBook,
    book: OrderBook,
    now: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantVenueFactory {
    pub best_bid: i64,
    pub best_ask: i64,
    pub levels: usize,
    pub qty_per_level: u64,
}

impl Default for ConstantVenueFactory {
    fn default() -> Self {
        ConstantVenueFactory {
            best_bid: 9_999,
            best_ask: 10_001,
            levels: 10,
            qty_per_level: 1_000_000_000,
        }
    }
}

impl ConstantVenueFactory {
    pub fn book(&self) -> OrderBook {
        let mut book = OrderBook::default();
        for i in 0..self.levels as i64 {
            let id = book.next_order_id();
            book.submit_limit(Order::limit(
                id,
                0,
                Side::Bid,
                Price(self.best_bid - i),
                self.qty_per_level,
                0,
            ))
            .expect("valid ladder");
            let id = book.next_order_id();
            book.submit_limit(Order::limit(
                id,
                0,
                Side::Ask,
                Price(self.best_ask + i),
                self.qty_per_level,
                0,
            ))
            .expect("valid ladder");
        }
        book
    }
}

impl VenueFactory for ConstantVenueFactory {
    type Venue = ConstantVenue;
    fn open(&self, _seed: u64, _horizon: Nanos) -> Result<ConstantVenue, EnvError> {
        if self.best_bid <= 0 || self.best_bid >= self.best_ask || self.levels == 0 || self.qty_per_level == 0 {
            return Err(EnvError::Config(
                "constant venue needs 0 < bid < ask and non-empty levels".into(),
            ));
        }
        let template = self.book();
        Ok(ConstantVenue {
            book: template.clone(),
            template,
            now: 0,
        })
    }
}

impl Venue for ConstantVenue {
    fn now(&self) -> Nanos {
        self.now
    }
    fn snapshot(&self) -> BookSnapshot {
        let mut s = self.book.snapshot(self.book.max_depth());
        s.ts = self.now;
        s
    }
    fn reference_price(&mut self) -> Option<f64> {
        self.book.mid_price()
    }
    fn execute_market(&mut self, side: Side, qty: u64) -> MarketOutcome {
        let out = self
            .book
            .submit_market(side, qty, EXEC_AGENT_ID, self.now)
            .expect("positive qty");
        self.book = self.template.clone();
        out
    }
    fn advance(&mut self, dt: Nanos) {
        self.now += dt;
    }
}

// ---------------------------------------------------------------------------
// Environment

/// Per-step diagnostics; the reward terms sum to the step reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Step index `k` (0-based) at which the action was taken.
    pub step: usize,
    pub time_ns: Nanos,
    pub action: usize,
    pub requested: u64,
    pub filled: u64,
    pub notional: i128,
    pub avg_price: Option<f64>,
    pub depth_consumed: u64,
    pub executed: u64,
    pub inventory: u64,
    pub shortfall_term: f64,
    pub depth_term: f64,
    pub terminal_term: f64,
    pub over_exec_term: f64,
    pub reward: f64,
    /// Quotes seen when the action was taken.
    pub best_bid: Option<i64>,
    pub best_ask: Option<i64>,
    /// Parent-side level-1 imbalance when the action was taken.
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Generic episodic environment with a discrete action space.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step_index(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool), EnvError>;
}

/// Totals of a finished (or running) episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub direction: Direction,
    pub parent_size: u64,
    pub arrival_price: f64,
    pub executed: u64,
    pub notional: i128,
    pub shortfall_total: f64,
    pub depth_penalty_total: f64,
    pub terminal_penalty_total: f64,
    pub over_exec_total: f64,
    pub reward_total: f64,
    pub n_steps: usize,
    pub steps_taken: usize,
    /// Index of the step whose fill completed the parent order.
    pub completion_step: Option<usize>,
    pub trace: Vec<StepInfo>,
}

impl EpisodeSummary {
    /// Implementation shortfall per parent share, positive when better than arrival.
    pub fn normalized_is(&self) -> f64 {
        self.shortfall_total / self.parent_size as f64
    }

    /// Depth, terminal and over-execution penalties per parent share (≤ 0).
    pub fn normalized_penalty(&self) -> f64 {
        (self.depth_penalty_total + self.terminal_penalty_total + self.over_exec_total) / self.parent_size as f64
    }

    /// Fraction of the window used before completion; 1 when never completed.
    pub fn time_fraction(&self) -> f64 {
        match self.completion_step {
            Some(k) => (k + 1) as f64 / self.n_steps as f64,
            None => 1.0,
        }
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,action,filled,avg_price,d_t,reward,inventory,best_bid,best_ask")?;
        let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.trace {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.step,
                s.action,
                s.filled,
                s.avg_price.map(|p| p.to_string()).unwrap_or_default(),
                s.depth_consumed,
                s.reward,
                s.inventory,
                opt(s.best_bid),
                opt(s.best_ask)
            )?;
        }
        Ok(())
    }
}

/// Normalized implementation shortfall of a finished episode.
pub fn episode_shortfall(summary: &EpisodeSummary) -> f64 {
    summary.normalized_is()
}

struct Episode<V> {
    venue: V,
    summary: EpisodeSummary,
    done: bool,
    frames: VecDeque<[f64; FRAME_LEN]>,
    buffer: VecDeque<BookSnapshot>,
    last_bid: f64,
    last_ask: f64,
}

pub struct ExecEnv<F: VenueFactory> {
    config: ExecConfig,
    factory: F,
    episode: Option<Episode<F::Venue>>,
}

impl<F: VenueFactory> ExecEnv<F> {
    pub fn new(config: ExecConfig, factory: F) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(ExecEnv {
            config,
            factory,
            episode: None,
        })
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn factory(&self) -> &F {
        &self.factory
    }

    pub fn venue(&self) -> Option<&F::Venue> {
        self.episode.as_ref().map(|e| &e.venue)
    }

    pub fn summary(&self) -> Option<&EpisodeSummary> {
        self.episode.as_ref().map(|e| &e.summary)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Snapshots recorded at step boundaries, oldest first.
    pub fn market_buffer(&self) -> Option<&VecDeque<BookSnapshot>> {
        self.episode.as_ref().map(|e| &e.buffer)
    }

    pub fn take_summary(&mut self) -> Option<EpisodeSummary> {
        self.episode.take().map(|e| e.summary)
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let cfg = &self.config;
        let n_steps = cfg.n_steps();
        let horizon = cfg.time_window_secs as Nanos * NANOS_PER_SEC;
        let mut venue = self.factory.open(seed, horizon)?;
        let p0 = venue.reference_price().ok_or(EnvError::NoArrivalPrice)?;
        let snap = venue.snapshot();
        let mut ep = Episode {
            summary: EpisodeSummary {
                seed,
                direction: cfg.direction,
                parent_size: cfg.parent_size,
                arrival_price: p0,
                executed: 0,
                notional: 0,
                shortfall_total: 0.0,
                depth_penalty_total: 0.0,
                terminal_penalty_total: 0.0,
                over_exec_total: 0.0,
                reward_total: 0.0,
                n_steps,
                steps_taken: 0,
                completion_step: None,
                trace: Vec::new(),
            },
            venue,
            done: false,
            frames: VecDeque::with_capacity(cfg.history_len),
            buffer: VecDeque::with_capacity(cfg.market_buffer_len),
            last_bid: snap.best_bid().map_or(p0, |p| p.0 as f64),
            last_ask: snap.best_ask().map_or(p0, |p| p.0 as f64),
        };
        let frame = Self::frame(cfg, &mut ep, &snap);
        for _ in 0..cfg.history_len {
            ep.frames.push_back(frame);
        }
        ep.buffer.push_back(snap);
        let obs = Self::flatten(&ep.frames);
        self.episode = Some(ep);
        Ok(obs)
    }

    fn frame(cfg: &ExecConfig, ep: &mut Episode<F::Venue>, snap: &BookSnapshot) -> [f64; FRAME_LEN] {
        if let Some(b) = snap.best_bid() {
            ep.last_bid = b.0 as f64;
        }
        if let Some(a) = snap.best_ask() {
            ep.last_ask = a.0 as f64;
        }
        let s = &ep.summary;
        let side = cfg.direction.side();
        let mut f = [0.0; FRAME_LEN];
        f[0] = 1.0 - (s.executed.min(cfg.parent_size) as f64 / cfg.parent_size as f64);
        f[1] = 1.0 - s.steps_taken as f64 / s.n_steps as f64;
        for k in 1..=IMBALANCE_LEVELS {
            f[1 + k] = snap.volume_imbalance(side, k);
        }
        let quote = |p: f64| match cfg.quote_mode {
            QuoteMode::Relative => (p - s.arrival_price) / s.arrival_price * 1e4,
            QuoteMode::Raw => p,
        };
        f[7] = quote(ep.last_bid);
        f[8] = quote(ep.last_ask);
        f
    }

    fn flatten(frames: &VecDeque<[f64; FRAME_LEN]>) -> Vec<f64> {
        frames.iter().flat_map(|f| f.iter().copied()).collect()
    }

    /// Pushes a frame built from the current book and returns the stacked observation.
    pub fn observe(&mut self) -> Result<Vec<f64>, EnvError> {
        let cfg = &self.config;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        let snap = ep.venue.snapshot();
        let frame = Self::frame(cfg, ep, &snap);
        if ep.frames.len() == cfg.history_len {
            ep.frames.pop_front();
        }
        ep.frames.push_back(frame);
        if ep.buffer.len() == cfg.market_buffer_len {
            ep.buffer.pop_front();
        }
        ep.buffer.push_back(snap);
        Ok(Self::flatten(&ep.frames))
    }

    pub fn step(&mut self, action: ExecAction) -> Result<StepOutcome, EnvError> {
        let cfg = self.config.clone();
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action.0 >= cfg.n_actions() {
            return Err(EnvError::InvalidAction(action.0));
        }
        let x0 = cfg.parent_size;
        let p0 = ep.summary.arrival_price;
        let k = ep.summary.steps_taken;
        let before = ep.venue.snapshot();
        let completed = ep.summary.executed >= x0;
        let effective = if completed { 0 } else { action.0 };

        let mut info = StepInfo {
            step: k,
            time_ns: ep.venue.now(),
            action: effective,
            requested: cfg.q_min * effective as u64,
            filled: 0,
            notional: 0,
            avg_price: None,
            depth_consumed: 0,
            executed: ep.summary.executed,
            inventory: 0,
            shortfall_term: 0.0,
            depth_term: 0.0,
            terminal_term: 0.0,
            over_exec_term: 0.0,
            reward: 0.0,
            best_bid: before.best_bid().map(|p| p.0),
            best_ask: before.best_ask().map(|p| p.0),
            imbalance: before.volume_imbalance(cfg.direction.side(), 1),
        };

        if effective > 0 {
            let out = ep.venue.execute_market(cfg.direction.side(), info.requested);
            info.filled = out.filled_qty;
            info.notional = out.notional;
            info.avg_price = out.avg_price();
            if out.filled_qty > 0 {
                info.depth_consumed = out.depth_consumed(cfg.depth_metric);
                let at_arrival = out.filled_qty as f64 * p0;
                info.shortfall_term = match cfg.direction {
                    Direction::Buy => at_arrival - out.notional as f64,
                    Direction::Sell => out.notional as f64 - at_arrival,
                };
                info.depth_term = -cfg.alpha * info.depth_consumed as f64;
            }
            let over_before = ep.summary.executed.saturating_sub(x0);
            ep.summary.executed += out.filled_qty;
            ep.summary.notional += out.notional;
            let over_after = ep.summary.executed.saturating_sub(x0);
            info.over_exec_term = -cfg.over_exec_penalty * (over_after - over_before) as f64;
            if ep.summary.completion_step.is_none() && ep.summary.executed >= x0 {
                ep.summary.completion_step = Some(k);
            }
        }

        ep.venue.advance(cfg.step_secs as Nanos * NANOS_PER_SEC);
        ep.summary.steps_taken += 1;
        let at_horizon = ep.summary.steps_taken == ep.summary.n_steps;
        let remaining = x0.saturating_sub(ep.summary.executed);
        if at_horizon && remaining > 0 {
            info.terminal_term = -cfg.beta * remaining as f64;
        }
        info.executed = ep.summary.executed;
        info.inventory = remaining;
        info.reward = info.shortfall_term + info.depth_term + info.terminal_term + info.over_exec_term;

        let s = &mut ep.summary;
        s.shortfall_total += info.shortfall_term;
        s.depth_penalty_total += info.depth_term;
        s.terminal_penalty_total += info.terminal_term;
        s.over_exec_total += info.over_exec_term;
        s.reward_total += info.reward;
        ep.done = at_horizon || (cfg.terminate_on_completion && s.executed >= x0);
        s.trace.push(info.clone());
        let done = ep.done;

        let observation = self.observe()?;
        Ok(StepOutcome {
            observation,
            reward: info.reward,
            done,
            info,
        })
    }
}

impl<F: VenueFactory> Environment for ExecEnv<F> {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }
    fn n_actions(&self) -> usize {
        self.config.n_actions()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        ExecEnv::reset(self, seed)
    }
    fn step_index(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool), EnvError> {
        let out = self.step(ExecAction(action))?;
        Ok((out.observation, out.reward, out.done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Venue replaying a fixed sequence of books, one per step.
    struct Scripted {
        books: Vec<OrderBook>,
        idx: usize,
        now: Nanos,
    }

    struct ScriptedFactory(Vec<Vec<(Side, i64, u64)>>);

    fn build(levels: &[(Side, i64, u64)]) -> OrderBook {
        let mut b = OrderBook::default();
        for &(side, px, q) in levels {
            let id = b.next_order_id();
            b.submit_limit(Order::limit(id, 0, side, Price(px), q, 0)).unwrap();
        }
        b
    }

    impl VenueFactory for ScriptedFactory {
        type Venue = Scripted;
        fn open(&self, _seed: u64, _h: Nanos) -> Result<Scripted, EnvError> {
            Ok(Scripted {
                books: self.0.iter().map(|l| build(l)).collect(),
                idx: 0,
                now: 0,
            })
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

    fn small(x0: u64, secs: u64) -> ExecConfig {
        ExecConfig {
            parent_size: x0,
            time_window_secs: secs,
            ..Default::default()
        }
    }

    #[test]
    fn reset_observation() {
        let mut env = ExecEnv::new(ExecConfig::default(), ConstantVenueFactory::default()).unwrap();
        let obs = env.reset(1).unwrap();
        assert_eq!(obs.len(), 36);
        for f in obs.chunks(FRAME_LEN) {
            assert_eq!(f[0], 1.0);
            assert_eq!(f[1], 1.0);
            assert!(f[2..7].iter().all(|&v| v == 0.5));
            assert_eq!(f[7], -1.0);
            assert_eq!(f[8], 1.0);
        }
        assert_eq!(env.summary().unwrap().arrival_price, 10_000.0);
    }

    #[test]
    fn substitution_case_gives_eighteen() {
        // Arrival mid 10000; then asks 10@9998 and 10@10000: 20 shares avg 9999, d=1.
        let factory = ScriptedFactory(vec![
            vec![(Side::Bid, 9_990, 100), (Side::Ask, 10_010, 100)],
            vec![(Side::Bid, 9_990, 100), (Side::Ask, 9_998, 10), (Side::Ask, 10_000, 10)],
        ]);
        let mut env = ExecEnv::new(small(1000, 100), factory).unwrap();
        env.reset(0).unwrap();
        let wait = env.step(ExecAction(0)).unwrap();
        assert_eq!(wait.reward, 0.0);
        let out = env.step(ExecAction(1)).unwrap();
        assert_eq!(out.info.avg_price, Some(9_999.0));
        assert_eq!(out.info.depth_consumed, 1);
        assert_eq!(out.reward, 18.0);
    }

    #[test]
    fn terminal_penalty_applies_at_horizon() {
        let mut env = ExecEnv::new(small(100, 5), ConstantVenueFactory::default()).unwrap();
        env.reset(0).unwrap();
        let mut last = None;
        for _ in 0..5 {
            last = Some(env.step(ExecAction(0)).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.info.terminal_term, -500.0);
        assert_eq!(last.reward, -500.0);
        assert!(matches!(env.step(ExecAction(0)), Err(EnvError::EpisodeFinished)));
    }

    #[test]
    fn unfilled_orders_do_not_count() {
        let factory = ScriptedFactory(vec![
            vec![(Side::Bid, 99, 10), (Side::Ask, 101, 10)],
            vec![(Side::Bid, 99, 10)],
        ]);
        let mut env = ExecEnv::new(small(100, 10), factory).unwrap();
        env.reset(0).unwrap();
        env.step(ExecAction(0)).unwrap();
        let out = env.step(ExecAction(2)).unwrap();
        assert_eq!(out.info.filled, 0);
        assert_eq!(out.info.inventory, 100);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.info.depth_consumed, 0);
    }

    #[test]
    fn over_execution_is_penalized_and_terminates() {
        let mut env = ExecEnv::new(small(30, 10), ConstantVenueFactory::default()).unwrap();
        env.reset(0).unwrap();
        let out = env.step(ExecAction(2)).unwrap();
        assert!(out.done);
        assert_eq!(out.info.filled, 40);
        assert_eq!(out.info.over_exec_term, -50.0);
        assert_eq!(out.info.shortfall_term, -40.0);
        let s = env.summary().unwrap();
        assert_eq!(s.completion_step, Some(0));
        assert_eq!(s.time_fraction(), 0.1);
    }

    #[test]
    fn zero_reward_after_completion_when_running_to_horizon() {
        let cfg = ExecConfig {
            terminate_on_completion: false,
            ..small(40, 10)
        };
        let mut env = ExecEnv::new(cfg, ConstantVenueFactory::default()).unwrap();
        env.reset(0).unwrap();
        let first = env.step(ExecAction(2)).unwrap();
        assert!(!first.done);
        for i in 1..10 {
            let out = env.step(ExecAction(4)).unwrap();
            assert_eq!(out.reward, 0.0);
            assert_eq!(out.info.action, 0);
            assert_eq!(out.done, i == 9);
        }
        assert_eq!(env.summary().unwrap().executed, 40);
    }

    #[test]
    fn stack_shifts_one_frame_per_step() {
        let mut env = ExecEnv::new(small(1000, 100), ConstantVenueFactory::default()).unwrap();
        let o0 = env.reset(0).unwrap();
        let o1 = env.step(ExecAction(1)).unwrap().observation;
        assert_eq!(&o1[..27], &o0[9..]);
        assert_eq!(o1[27], 1.0 - 20.0 / 1000.0);
        assert_eq!(o1[28], 1.0 - 1.0 / 100.0);
    }

    #[test]
    fn sell_direction_flips_shortfall_sign() {
        let buy = ExecConfig {
            direction: Direction::Buy,
            ..small(100, 10)
        };
        let sell = ExecConfig {
            direction: Direction::Sell,
            ..small(100, 10)
        };
        let mut eb = ExecEnv::new(buy, ConstantVenueFactory::default()).unwrap();
        let mut es = ExecEnv::new(sell, ConstantVenueFactory::default()).unwrap();
        eb.reset(0).unwrap();
        es.reset(0).unwrap();
        let rb = eb.step(ExecAction(1)).unwrap();
        let rs = es.step(ExecAction(1)).unwrap();
        // Buy pays the ask, sell receives the bid: both one tick worse than arrival.
        assert_eq!(rb.info.avg_price, Some(10_001.0));
        assert_eq!(rs.info.avg_price, Some(9_999.0));
        assert_eq!(rb.info.shortfall_term, -20.0);
        assert_eq!(rs.info.shortfall_term, -20.0);
        // Raw P0 − P_t for the sell would have the opposite sign.
        assert_eq!(20.0 * (10_000.0 - 9_999.0), -rs.info.shortfall_term);
    }

    #[test]
    fn infeasible_config_rejected() {
        let cfg = ExecConfig {
            parent_size: 1_000_000,
            ..Default::default()
        };
        assert!(matches!(
            ExecEnv::new(cfg, ConstantVenueFactory::default()),
            Err(EnvError::Config(_))
        ));
        let cfg = ExecConfig {
            time_window_secs: 7,
            step_secs: 2,
            ..Default::default()
        };
        assert!(ExecEnv::new(cfg, ConstantVenueFactory::default()).is_err());
    }

    #[test]
    fn invalid_action_and_step_before_reset() {
        let mut env = ExecEnv::new(ExecConfig::default(), ConstantVenueFactory::default()).unwrap();
        assert!(matches!(env.step(ExecAction(0)), Err(EnvError::NotReset)));
        env.reset(0).unwrap();
        assert!(matches!(env.step(ExecAction(5)), Err(EnvError::InvalidAction(5))));
    }

    #[test]
    fn all_max_actions_finish_in_250_steps() {
        let mut env = ExecEnv::new(ExecConfig::default(), ConstantVenueFactory::default()).unwrap();
        env.reset(0).unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(ExecAction(4)).unwrap().done {
                break;
            }
        }
        assert_eq!(steps, 250);
    }

    #[test]
    fn shortfall_matches_fill_recomputation_on_sim_market() {
        let factory = SimVenueFactory {
            market: MarketConfig::lite(),
            warmup_secs: 60,
        };
        let cfg = small(400, 60);
        let mut env = ExecEnv::new(cfg, factory).unwrap();
        env.reset(3).unwrap();
        let mut a = 0;
        while !env.is_done() {
            a = (a + 1) % 5;
            env.step(ExecAction(a)).unwrap();
        }
        let s = env.summary().unwrap();
        let brute: f64 = s
            .trace
            .iter()
            .map(|t| t.filled as f64 * s.arrival_price - t.notional as f64)
            .sum::<f64>()
            / 400.0;
        assert!((episode_shortfall(s) - brute).abs() < 1e-9);
        assert!(s.trace.iter().all(|t| t.inventory + t.executed.min(400) == 400));
    }

    #[test]
    fn same_seed_same_episode() {
        let run = || {
            let factory = SimVenueFactory {
                market: MarketConfig::lite(),
                warmup_secs: 30,
            };
            let mut env = ExecEnv::new(small(200, 30), factory).unwrap();
            let mut obs = vec![env.reset(9).unwrap()];
            while !env.is_done() {
                obs.push(env.step(ExecAction(1)).unwrap().observation);
            }
            obs
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trace_csv_header() {
        let mut env = ExecEnv::new(small(20, 5), ConstantVenueFactory::default()).unwrap();
        env.reset(0).unwrap();
        env.step(ExecAction(1)).unwrap();
        let mut buf = Vec::new();
        env.summary().unwrap().write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,action,filled,avg_price,d_t,reward,inventory,best_bid,best_ask"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,20,10001,0,-20,0,9999,10001");
    }
}
