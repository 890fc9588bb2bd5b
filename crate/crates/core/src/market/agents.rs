//! Background trading agents.
//!
//! Each class implements [`TradingAgent`]; the kernel wakes an agent, hands it
//! the current book view, and applies the returned actions through the book.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::fundamental::Oracle;
use crate::lob::{AgentId, BookSnapshot, Nanos, Price, Side};

pub const NANOS_PER_SEC: Nanos = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentAction {
    Limit {
        side: Side,
        price: Price,
        qty: u64,
    },
    Market {
        side: Side,
        qty: u64,
    },
    /// Cancel every order this agent still has resting.
    CancelAll,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentActions {
    pub orders: Vec<AgentAction>,
    /// Delay until the next wake-up; `None` retires the agent.
    pub next_wakeup: Option<Nanos>,
}

/// Read-only market state plus the oracle, as seen by a waking agent.
pub struct WakeContext<'a> {
    pub now: Nanos,
    pub session_end: Nanos,
    pub snapshot: &'a BookSnapshot,
    /// Mid prices sampled once per clock tick, oldest first.
    pub mid_history: &'a VecDeque<f64>,
    pub last_trade: Option<Price>,
    /// Shares traded in `(now - window, now]`.
    pub volume_in: &'a dyn Fn(Nanos) -> u64,
    pub oracle: &'a mut Oracle,
}

pub trait TradingAgent: Send {
    fn id(&self) -> AgentId;
    fn class_name(&self) -> &'static str;
    /// Delay from session open to the first wake-up.
    fn first_wakeup(&mut self, rng: &mut ChaCha8Rng) -> Option<Nanos>;
    fn wakeup(&mut self, ctx: &mut WakeContext<'_>, rng: &mut ChaCha8Rng) -> AgentActions;
}

fn exp_delay(rng: &mut ChaCha8Rng, mean_ns: f64) -> Nanos {
    let d = Exp::new(1.0 / mean_ns).expect("positive mean").sample(rng);
    (d.round() as Nanos).max(1)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseAgentParams {
    pub min_size: u64,
    pub max_size: u64,
    pub mean_wakeup_secs: f64,
}

impl Default for NoiseAgentParams {
    fn default() -> Self {
        NoiseAgentParams {
            min_size: 10,
            max_size: 100,
            mean_wakeup_secs: 60.0,
        }
    }
}

/// Sends market orders of random side and size at exponential intervals.
#[derive(Debug, Clone)]
pub struct NoiseAgent {
    pub id: AgentId,
    pub params: NoiseAgentParams,
}

impl NoiseAgent {
    fn delay(&self, rng: &mut ChaCha8Rng) -> Nanos {
        exp_delay(rng, self.params.mean_wakeup_secs * NANOS_PER_SEC as f64)
    }
}

pub fn noise_agent_wakeup(params: &NoiseAgentParams, rng: &mut ChaCha8Rng) -> AgentAction {
    let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
    let qty = rng.random_range(params.min_size..=params.max_size);
    AgentAction::Market { side, qty }
}

impl TradingAgent for NoiseAgent {
    fn id(&self) -> AgentId {
        self.id
    }
    fn class_name(&self) -> &'static str {
        "noise"
    }
    fn first_wakeup(&mut self, rng: &mut ChaCha8Rng) -> Option<Nanos> {
        Some(self.delay(rng))
    }
    fn wakeup(&mut self, _ctx: &mut WakeContext<'_>, rng: &mut ChaCha8Rng) -> AgentActions {
        let order = noise_agent_wakeup(&self.params, rng);
        AgentActions {
            orders: vec![order],
            next_wakeup: Some(self.delay(rng)),
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueAgentParams {
    /// Long-run mean of the agent's fundamental belief, cents.
    pub mu_va: f64,
    /// Mean reversion per ns used to project observations to session end.
    pub theta_va: f64,
    /// Wake-up intensity per ns.
    pub lambda_va: f64,
    pub size: u64,
    /// Variance of the oracle observation noise, cents².
    pub obs_noise_var: f64,
}

impl Default for ValueAgentParams {
    fn default() -> Self {
        ValueAgentParams {
            mu_va: 100_000.0,
            theta_va: 1.67e-15,
            lambda_va: 5.7e-12,
            size: 100,
            obs_noise_var: 10_000.0,
        }
    }
}

/// Trades toward a noisy estimate of the fundamental value.
#[derive(Debug, Clone)]
pub struct ValueAgent {
    pub id: AgentId,
    pub params: ValueAgentParams,
}

/// Decision rule of a value agent given its estimate `est` (cents).
///
/// * `est > ask`: buy limit at the ask (crosses).
/// * `est < bid`: sell limit at the bid (crosses).
/// * otherwise one tick inside the spread on the mispriced side; no order when `est == mid`.
/// * one or both sides empty: limit at `est` rounded to a tick on the empty side.
pub fn value_agent_decision(snapshot: &BookSnapshot, est: f64, size: u64, rng: &mut ChaCha8Rng) -> Option<AgentAction> {
    let bid = snapshot.best_bid();
    let ask = snapshot.best_ask();
    if let Some(a) = ask {
        if est > a.0 as f64 {
            return Some(AgentAction::Limit {
                side: Side::Bid,
                price: a,
                qty: size,
            });
        }
    }
    if let Some(b) = bid {
        if est < b.0 as f64 {
            return Some(AgentAction::Limit {
                side: Side::Ask,
                price: b,
                qty: size,
            });
        }
    }
    let rounded = Price((est.round() as i64).max(1));
    match (bid, ask) {
        (Some(b), Some(a)) => {
            let mid = (b.0 + a.0) as f64 / 2.0;
            if est > mid {
                let px = if b.0 + 1 < a.0 { b.offset(1) } else { b };
                Some(AgentAction::Limit {
                    side: Side::Bid,
                    price: px,
                    qty: size,
                })
            } else if est < mid {
                let px = if a.0 - 1 > b.0 { a.offset(-1) } else { a };
                Some(AgentAction::Limit {
                    side: Side::Ask,
                    price: px,
                    qty: size,
                })
            } else {
                None
            }
        }
        // est <= ask here, so a bid at the rounded estimate stays below the ask.
        (None, Some(a)) => Some(AgentAction::Limit {
            side: Side::Bid,
            price: rounded.min(a.offset(-1)).max(Price(1)),
            qty: size,
        }),
        (Some(b), None) => Some(AgentAction::Limit {
            side: Side::Ask,
            price: rounded.max(b.offset(1)),
            qty: size,
        }),
        (None, None) => {
            let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
            Some(AgentAction::Limit {
                side,
                price: rounded,
                qty: size,
            })
        }
    }
}

impl ValueAgent {
    fn delay(&self, rng: &mut ChaCha8Rng) -> Nanos {
        exp_delay(rng, 1.0 / self.params.lambda_va)
    }

    /// Projects an observation to session end under the agent's own OU belief.
    pub fn estimate(&self, obs: f64, now: Nanos, session_end: Nanos) -> f64 {
        let horizon = (session_end - now).max(0) as f64;
        let p = &self.params;
        p.mu_va + (obs - p.mu_va) * (-p.theta_va * horizon).exp()
    }
}

impl TradingAgent for ValueAgent {
    fn id(&self) -> AgentId {
        self.id
    }
    fn class_name(&self) -> &'static str {
        "value"
    }
    fn first_wakeup(&mut self, rng: &mut ChaCha8Rng) -> Option<Nanos> {
        Some(self.delay(rng))
    }
    fn wakeup(&mut self, ctx: &mut WakeContext<'_>, rng: &mut ChaCha8Rng) -> AgentActions {
        let obs = ctx.oracle.observe(self.id, ctx.now, self.params.obs_noise_var);
        let est = self.estimate(obs, ctx.now, ctx.session_end);
        let mut orders = vec![AgentAction::CancelAll];
        orders.extend(value_agent_decision(ctx.snapshot, est, self.params.size, rng));
        AgentActions {
            orders,
            next_wakeup: Some(self.delay(rng)),
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumAgentParams {
    pub short_window: usize,
    pub long_window: usize,
    pub size: u64,
    pub wakeup_secs: f64,
}

impl Default for MomentumAgentParams {
    fn default() -> Self {
        MomentumAgentParams {
            short_window: 20,
            long_window: 50,
            size: 50,
            wakeup_secs: 20.0,
        }
    }
}

/// Follows the crossover of short and long moving averages of the mid.
#[derive(Debug, Clone)]
pub struct MomentumAgent {
    pub id: AgentId,
    pub params: MomentumAgentParams,
}

fn tail_mean(history: &VecDeque<f64>, n: usize) -> f64 {
    history.iter().rev().take(n).sum::<f64>() / n as f64
}

/// Returns `(short_ma, long_ma)` or `None` when the history is too short.
pub fn moving_averages(history: &VecDeque<f64>, short: usize, long: usize) -> Option<(f64, f64)> {
    (history.len() >= long && short >= 1).then(|| (tail_mean(history, short), tail_mean(history, long)))
}

pub fn momentum_agent_decision(params: &MomentumAgentParams, history: &VecDeque<f64>) -> Option<AgentAction> {
    let (short, long) = moving_averages(history, params.short_window, params.long_window)?;
    let side = if short > long {
        Side::Bid
    } else if short < long {
        Side::Ask
    } else {
        return None;
    };
    Some(AgentAction::Market { side, qty: params.size })
}

impl TradingAgent for MomentumAgent {
    fn id(&self) -> AgentId {
        self.id
    }
    fn class_name(&self) -> &'static str {
        "momentum"
    }
    fn first_wakeup(&mut self, rng: &mut ChaCha8Rng) -> Option<Nanos> {
        let period = (self.params.wakeup_secs * NANOS_PER_SEC as f64) as Nanos;
        Some(rng.random_range(1..=period.max(1)))
    }
    fn wakeup(&mut self, ctx: &mut WakeContext<'_>, _rng: &mut ChaCha8Rng) -> AgentActions {
        AgentActions {
            orders: momentum_agent_decision(&self.params, ctx.mid_history)
                .into_iter()
                .collect(),
            next_wakeup: Some((self.params.wakeup_secs * NANOS_PER_SEC as f64) as Nanos),
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketMakerParams {
    /// Fraction of windowed traded volume quoted at each level.
    pub pov: f64,
    pub n_ticks: u32,
    pub wakeup_secs: f64,
    pub min_window_secs: f64,
    pub max_window_secs: f64,
    /// Windowed volume the adaptive window steers toward.
    pub target_window_volume: u64,
    pub min_level_size: u64,
}

impl Default for MarketMakerParams {
    fn default() -> Self {
        MarketMakerParams {
            pov: 0.00025,
            n_ticks: 10,
            wakeup_secs: 1.0,
            min_window_secs: 1.0,
            max_window_secs: 600.0,
            target_window_volume: 400_000,
            min_level_size: 1,
        }
    }
}

/// `max(min_size, round(pov · volume))`.
pub fn market_maker_level_size(pov: f64, window_volume: u64, min_size: u64) -> u64 {
    ((pov * window_volume as f64).round() as u64).max(min_size)
}

/// Cancels and re-quotes a symmetric ladder every wake-up.
#[derive(Debug, Clone)]
pub struct MarketMaker {
    pub id: AgentId,
    pub params: MarketMakerParams,
    window: Nanos,
}

impl MarketMaker {
    pub fn new(id: AgentId, params: MarketMakerParams) -> Self {
        let window = (params.min_window_secs * NANOS_PER_SEC as f64) as Nanos;
        MarketMaker { id, params, window }
    }

    pub fn window(&self) -> Nanos {
        self.window
    }

    /// Doubles the window while it holds under half the target volume (always when
    /// empty) and halves it above twice the target, within `[min, max]`.
    fn adapt_window(&mut self, volume: u64) {
        let lo = (self.params.min_window_secs * NANOS_PER_SEC as f64) as Nanos;
        let hi = (self.params.max_window_secs * NANOS_PER_SEC as f64) as Nanos;
        let target = self.params.target_window_volume;
        let next = if volume == 0 || volume < target / 2 {
            self.window * 2
        } else if volume > target.saturating_mul(2) {
            self.window / 2
        } else {
            self.window
        };
        self.window = next.clamp(lo, hi.max(lo));
    }

    /// Reference price: floor of the mid, else the last trade, else the fundamental.
    pub fn reference(snapshot: &BookSnapshot, last_trade: Option<Price>, fundamental: impl FnOnce() -> f64) -> Price {
        if let Some(m2) = snapshot.mid_x2() {
            return Price(m2.div_euclid(2));
        }
        last_trade.unwrap_or_else(|| Price((fundamental().round() as i64).max(1)))
    }

    pub fn quotes(&self, reference: Price, size: u64) -> Vec<AgentAction> {
        let mut out = Vec::with_capacity(2 * self.params.n_ticks as usize);
        for i in 1..=self.params.n_ticks as i64 {
            if reference.0 - i > 0 {
                out.push(AgentAction::Limit {
                    side: Side::Bid,
                    price: reference.offset(-i),
                    qty: size,
                });
            }
            out.push(AgentAction::Limit {
                side: Side::Ask,
                price: reference.offset(i),
                qty: size,
            });
        }
        out
    }
}

impl TradingAgent for MarketMaker {
    fn id(&self) -> AgentId {
        self.id
    }
    fn class_name(&self) -> &'static str {
        "market_maker"
    }
    fn first_wakeup(&mut self, _rng: &mut ChaCha8Rng) -> Option<Nanos> {
        Some(0)
    }
    fn wakeup(&mut self, ctx: &mut WakeContext<'_>, _rng: &mut ChaCha8Rng) -> AgentActions {
        let volume = (ctx.volume_in)(self.window);
        let size = market_maker_level_size(self.params.pov, volume, self.params.min_level_size);
        self.adapt_window(volume);
        let now = ctx.now;
        let oracle = &mut *ctx.oracle;
        let reference = Self::reference(ctx.snapshot, ctx.last_trade, || oracle.fundamental_at(now));
        let mut orders = vec![AgentAction::CancelAll];
        orders.extend(self.quotes(reference, size));
        AgentActions {
            orders,
            next_wakeup: Some((self.params.wakeup_secs * NANOS_PER_SEC as f64) as Nanos),
        }
    }
}
