//! Agent-based market: fundamental process, background agents and the
//! event kernel that ties them to the order book.

pub mod agents;
pub mod fundamental;
pub mod kernel;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{MarketMakerParams, MomentumAgentParams, NoiseAgentParams, ValueAgentParams, NANOS_PER_SEC};
pub use fundamental::{fundamental_step, FundamentalParams, Oracle};
pub use kernel::{kernel_run, Kernel, KernelObserver, NoopObserver, SimClock, SimEvent};

use crate::lob::{BookSnapshot, Fill, Nanos, DEFAULT_DEPTH};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid market config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentPopulation {
    pub n_noise: u32,
    pub n_value: u32,
    pub n_momentum: u32,
    pub n_market_maker: u32,
}

impl Default for AgentPopulation {
    fn default() -> Self {
        AgentPopulation {
            n_noise: 1000,
            n_value: 102,
            n_momentum: 12,
            n_market_maker: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub population: AgentPopulation,
    pub fundamental: FundamentalParams,
    pub noise: NoiseAgentParams,
    pub value: ValueAgentParams,
    pub momentum: MomentumAgentParams,
    pub market_maker: MarketMakerParams,
    pub book_depth: usize,
    /// Snapshots retained by the exchange for agent queries.
    pub history_len: usize,
    pub tick_interval_ns: Nanos,
    /// Keep snapshots, fills and the fundamental path in a [`SessionLog`].
    #[serde(skip)]
    pub record_log: bool,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            population: AgentPopulation::default(),
            fundamental: FundamentalParams::default(),
            noise: NoiseAgentParams::default(),
            value: ValueAgentParams::default(),
            momentum: MomentumAgentParams::default(),
            market_maker: MarketMakerParams::default(),
            book_depth: DEFAULT_DEPTH,
            history_len: 500,
            tick_interval_ns: NANOS_PER_SEC,
            record_log: false,
        }
    }
}

impl MarketConfig {
    /// Small population used for fast experiments: 100 noise, 10 value, 2 momentum, 1 market maker.
    /// Its market maker quotes at least 10 shares per level; with 1 the thin
    /// book throttles traded volume and the ladder never grows.
    pub fn lite() -> Self {
        MarketConfig {
            population: AgentPopulation {
                n_noise: 100,
                n_value: 10,
                n_momentum: 2,
                n_market_maker: 1,
            },
            market_maker: MarketMakerParams {
                min_level_size: 10,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let fail = |m: &str| Err(MarketError::Config(m.to_string()));
        self.fundamental.validate()?;
        let n = &self.noise;
        if n.min_size == 0 || n.min_size > n.max_size || !(n.mean_wakeup_secs > 0.0) {
            return fail("noise: need 1 <= min_size <= max_size and mean_wakeup_secs > 0");
        }
        let v = &self.value;
        if !(v.lambda_va > 0.0) || v.size == 0 || !(v.theta_va >= 0.0) || !(v.obs_noise_var >= 0.0) || !(v.mu_va > 0.0)
        {
            return fail("value: need mu_va > 0, lambda_va > 0, size > 0, theta_va >= 0, obs_noise_var >= 0");
        }
        let m = &self.momentum;
        if m.short_window == 0 || m.short_window > m.long_window || m.size == 0 || !(m.wakeup_secs > 0.0) {
            return fail("momentum: need 1 <= short_window <= long_window, size > 0, wakeup_secs > 0");
        }
        if m.long_window > self.history_len {
            return fail("momentum: long_window exceeds history_len");
        }
        let mm = &self.market_maker;
        if !(mm.pov > 0.0 && mm.pov < 1.0) || mm.n_ticks == 0 || !(mm.wakeup_secs > 0.0) {
            return fail("market_maker: need 0 < pov < 1, n_ticks >= 1, wakeup_secs > 0");
        }
        if !(mm.min_window_secs >= 1e-9) || mm.max_window_secs < mm.min_window_secs || mm.min_level_size == 0 {
            return fail("market_maker: need 0 < min_window_secs <= max_window_secs and min_level_size >= 1");
        }
        if self.book_depth == 0 || self.history_len == 0 || self.tick_interval_ns <= 0 {
            return fail("book_depth, history_len and tick_interval_ns must be positive");
        }
        Ok(())
    }
}

/// Snapshots at every clock tick, all fills, and the fundamental at each tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub snapshots: Vec<BookSnapshot>,
    pub fills: Vec<Fill>,
    pub fundamental: Vec<(Nanos, f64)>,
}

impl SessionLog {
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W, depth: usize) -> io::Result<()> {
        let mut header = vec!["ts".to_string()];
        for side in ["bid", "ask"] {
            for k in 1..=depth {
                header.push(format!("{side}_px_{k}"));
                header.push(format!("{side}_qty_{k}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for s in &self.snapshots {
            let mut row = vec![s.ts.to_string()];
            for levels in [&s.bids, &s.asks] {
                for k in 0..depth {
                    match levels.get(k) {
                        Some((p, q)) => {
                            row.push(p.to_string());
                            row.push(q.to_string());
                        }
                        None => {
                            row.push(String::new());
                            row.push(String::new());
                        }
                    }
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_fills_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "ts,taker_order_id,maker_order_id,taker_agent_id,maker_agent_id,taker_side,price,qty"
        )?;
        for f in &self.fills {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                f.ts,
                f.taker_order_id,
                f.maker_order_id,
                f.taker_agent_id,
                f.maker_agent_id,
                f.taker_side.as_str(),
                f.price,
                f.qty
            )?;
        }
        Ok(())
    }

    pub fn write_fundamental_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ts,fundamental")?;
        for (t, x) in &self.fundamental {
            writeln!(w, "{t},{x}")?;
        }
        Ok(())
    }
}
