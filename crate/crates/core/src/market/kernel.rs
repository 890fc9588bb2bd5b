//! Discrete-event kernel.
//!
//! Events are processed in `(ts, seq)` order. Orders reach the book with zero
//! latency, so an agent's actions are applied at its wake-up instant.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agents::{AgentAction, MarketMaker, MomentumAgent, NoiseAgent, TradingAgent, ValueAgent, WakeContext};
use super::fundamental::Oracle;
use super::{MarketConfig, MarketError, SessionLog};
use crate::lob::{AgentId, BookSnapshot, Fill, MarketOutcome, Nanos, Order, OrderBook, OrderId, Price, Side};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventPayload {
    AgentWakeup(AgentId),
    ClockTick,
    KernelStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub ts: Nanos,
    pub seq: u64,
    pub payload: EventPayload,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.ts, self.seq).cmp(&(other.ts, other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Hook invoked for every event the kernel processes.
pub trait KernelObserver {
    fn on_event(&mut self, _event: &SimEvent) {}
}

pub struct NoopObserver;
impl KernelObserver for NoopObserver {}

/// Monotone simulation clock, nanoseconds since session open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub now: Nanos,
    pub session_end: Nanos,
}

pub struct Kernel {
    config: MarketConfig,
    clock: SimClock,
    queue: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    agents: Vec<Box<dyn TradingAgent>>,
    rngs: Vec<ChaCha8Rng>,
    book: OrderBook,
    oracle: Oracle,
    history: VecDeque<BookSnapshot>,
    mid_history: VecDeque<f64>,
    tape: VecDeque<(Nanos, u64)>,
    tape_horizon: Nanos,
    last_trade: Option<Price>,
    resting: HashMap<AgentId, Vec<OrderId>>,
    log: Option<SessionLog>,
    stopped: bool,
}

impl Kernel {
    /// Builds the agent population and schedules the first wake-ups.
    pub fn new(config: MarketConfig, seed: u64, session_end: Nanos) -> Result<Self, MarketError> {
        config.validate()?;
        if session_end < 0 {
            return Err(MarketError::Config("session length must be >= 0".into()));
        }
        let pop = &config.population;
        let mut agents: Vec<Box<dyn TradingAgent>> = Vec::new();
        let mut id: AgentId = 1;
        let mut next_id = || {
            let v = id;
            id += 1;
            v
        };
        for _ in 0..pop.n_market_maker {
            agents.push(Box::new(MarketMaker::new(next_id(), config.market_maker.clone())));
        }
        for _ in 0..pop.n_value {
            agents.push(Box::new(ValueAgent {
                id: next_id(),
                params: config.value.clone(),
            }));
        }
        for _ in 0..pop.n_momentum {
            agents.push(Box::new(MomentumAgent {
                id: next_id(),
                params: config.momentum.clone(),
            }));
        }
        for _ in 0..pop.n_noise {
            agents.push(Box::new(NoiseAgent {
                id: next_id(),
                params: config.noise.clone(),
            }));
        }

        let rngs = agents
            .iter()
            .map(|a| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive_seed(seed, &[0xA6E7]));
                rng.set_stream(a.id() as u64);
                rng
            })
            .collect();

        let max_window = (config.market_maker.max_window_secs * 1e9) as Nanos;
        let mut kernel = Kernel {
            book: OrderBook::new(config.book_depth),
            oracle: Oracle::new(config.fundamental.clone(), seed),
            clock: SimClock { now: 0, session_end },
            queue: BinaryHeap::new(),
            next_seq: 0,
            agents,
            rngs,
            history: VecDeque::with_capacity(config.history_len),
            mid_history: VecDeque::with_capacity(config.history_len),
            tape: VecDeque::new(),
            tape_horizon: max_window.max(1),
            last_trade: None,
            resting: HashMap::new(),
            log: config.record_log.then(SessionLog::default),
            stopped: false,
            config,
        };
        for i in 0..kernel.agents.len() {
            if let Some(delay) = kernel.agents[i].first_wakeup(&mut kernel.rngs[i]) {
                let agent = kernel.agents[i].id();
                kernel.schedule(delay, EventPayload::AgentWakeup(agent));
            }
        }
        kernel.schedule(kernel.config.tick_interval_ns, EventPayload::ClockTick);
        // Stop sorts after every other event sharing its timestamp.
        kernel.queue.push(Reverse(SimEvent {
            ts: session_end,
            seq: u64::MAX,
            payload: EventPayload::KernelStop,
        }));
        Ok(kernel)
    }

    fn schedule(&mut self, ts: Nanos, payload: EventPayload) {
        let ev = SimEvent {
            ts,
            seq: self.next_seq,
            payload,
        };
        self.next_seq += 1;
        self.queue.push(Reverse(ev));
    }

    pub fn now(&self) -> Nanos {
        self.clock.now
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn oracle_mut(&mut self) -> &mut Oracle {
        &mut self.oracle
    }

    pub fn last_trade(&self) -> Option<Price> {
        self.last_trade
    }

    /// Most recent clock-tick snapshots, oldest first (bounded ring).
    pub fn history(&self) -> &VecDeque<BookSnapshot> {
        &self.history
    }

    pub fn snapshot(&self) -> BookSnapshot {
        self.book.snapshot(self.config.book_depth)
    }

    pub fn log(&self) -> Option<&SessionLog> {
        self.log.as_ref()
    }

    pub fn into_log(self) -> Option<SessionLog> {
        self.log
    }

    /// Processes every event with `ts <= t` (capped at session end) and moves the clock to `t`.
    pub fn run_until(&mut self, t: Nanos, observer: &mut dyn KernelObserver) {
        let t = t.min(self.clock.session_end);
        while !self.stopped {
            match self.queue.peek() {
                Some(Reverse(ev)) if ev.ts <= t => {}
                _ => break,
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            debug_assert!(ev.ts >= self.clock.now);
            self.clock.now = ev.ts;
            self.book.set_time(ev.ts);
            observer.on_event(&ev);
            match ev.payload {
                EventPayload::AgentWakeup(agent) => self.wake(agent),
                EventPayload::ClockTick => self.tick(),
                EventPayload::KernelStop => self.stopped = true,
            }
        }
        if t > self.clock.now {
            self.clock.now = t;
            self.book.set_time(t);
        }
    }

    fn tick(&mut self) {
        let now = self.clock.now;
        let snap = self.snapshot();
        let fundamental = self.oracle.fundamental_at(now);
        if self.history.len() == self.config.history_len {
            self.history.pop_front();
        }
        if let Some(mid) = snap.mid() {
            if self.mid_history.len() == self.config.history_len {
                self.mid_history.pop_front();
            }
            self.mid_history.push_back(mid);
        }
        if let Some(log) = self.log.as_mut() {
            log.snapshots.push(snap.clone());
            log.fundamental.push((now, fundamental));
        }
        self.history.push_back(snap);
        self.schedule(now + self.config.tick_interval_ns, EventPayload::ClockTick);
    }

    fn agent_index(&self, agent: AgentId) -> usize {
        // Ids are dense and start at 1.
        agent as usize - 1
    }

    fn wake(&mut self, agent: AgentId) {
        let idx = self.agent_index(agent);
        let now = self.clock.now;
        let snapshot = self.snapshot();
        let tape = &self.tape;
        let volume_in = move |window: Nanos| -> u64 {
            tape.iter()
                .rev()
                .take_while(|(ts, _)| *ts > now - window)
                .map(|(_, q)| q)
                .sum()
        };
        let mut ctx = WakeContext {
            now,
            session_end: self.clock.session_end,
            snapshot: &snapshot,
            mid_history: &self.mid_history,
            last_trade: self.last_trade,
            volume_in: &volume_in,
            oracle: &mut self.oracle,
        };
        let actions = self.agents[idx].wakeup(&mut ctx, &mut self.rngs[idx]);
        for action in actions.orders {
            self.apply(agent, action);
        }
        if let Some(delay) = actions.next_wakeup {
            self.schedule(now + delay.max(1), EventPayload::AgentWakeup(agent));
        }
    }

    fn record_fills(&mut self, fills: &[Fill]) {
        for f in fills {
            self.tape.push_back((f.ts, f.qty));
            self.last_trade = Some(f.price);
        }
        let horizon = self.clock.now - self.tape_horizon;
        while self.tape.front().is_some_and(|(ts, _)| *ts <= horizon) {
            self.tape.pop_front();
        }
        if let Some(log) = self.log.as_mut() {
            log.fills.extend_from_slice(fills);
        }
    }

    fn apply(&mut self, agent: AgentId, action: AgentAction) {
        let now = self.clock.now;
        match action {
            AgentAction::Limit { side, price, qty } => {
                if qty == 0 || price.0 <= 0 {
                    return;
                }
                let id = self.book.next_order_id();
                let out = self
                    .book
                    .submit_limit(Order::limit(id, agent, side, price, qty, now))
                    .expect("fresh id and validated order");
                if out.resting_qty > 0 {
                    self.resting.entry(agent).or_default().push(id);
                }
                self.record_fills(&out.fills);
            }
            AgentAction::Market { side, qty } => {
                if qty > 0 {
                    self.execute_market(side, qty, agent);
                }
            }
            AgentAction::CancelAll => {
                if let Some(ids) = self.resting.remove(&agent) {
                    for id in ids {
                        self.book.cancel(id);
                    }
                }
            }
        }
    }

    /// Sends a market order at the current time on behalf of `agent`.
    pub fn execute_market(&mut self, side: Side, qty: u64, agent: AgentId) -> MarketOutcome {
        let out = self
            .book
            .submit_market(side, qty, agent, self.clock.now)
            .expect("positive quantity");
        self.record_fills(&out.fills);
        out
    }
}

/// Runs a whole session of `duration` nanoseconds and returns its log.
pub fn kernel_run(
    config: &MarketConfig,
    seed: u64,
    duration: Nanos,
    observer: &mut dyn KernelObserver,
) -> Result<SessionLog, MarketError> {
    let mut cfg = config.clone();
    cfg.record_log = true;
    let mut kernel = Kernel::new(cfg, seed, duration)?;
    kernel.run_until(duration, observer);
    Ok(kernel.into_log().expect("logging enabled"))
}
