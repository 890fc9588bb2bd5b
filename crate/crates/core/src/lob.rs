//! Limit order book with price-time priority matching.
//!
//! Prices are integer ticks (1 tick = 1 cent). Each side is a ladder of
//! price levels keyed by price, and each level is a FIFO queue ordered by
//! the book-wide arrival sequence number. Market orders never rest; limit
//! orders match while they cross and rest the remainder at the queue tail.
//!
//! ```text
//!   asks   101 | 5 (seq 1) 5 (seq 2)      <- best ask
//!   ----------------------------------
//!   bids   100 | 10 (seq 0)               <- best bid
//!           99 | 7 (seq 3)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type OrderId = u64;
pub type AgentId = u32;
/// Simulation time in nanoseconds since session open.
pub type Nanos = i64;

/// Default number of levels per side reported in snapshots and features.
pub const DEFAULT_DEPTH: usize = 10;

/// A price expressed in integer ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Price {
    #[inline]
    pub fn ticks(self) -> i64 {
        self.0
    }

    #[inline]
    pub fn offset(self, ticks: i64) -> Price {
        Price(self.0 + ticks)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub kind: OrderKind,
    pub price: Option<Price>,
    pub qty: u64,
    pub ts: Nanos,
    /// Assigned by the book on submission.
    pub seq: u64,
}

impl Order {
    pub fn limit(id: OrderId, agent_id: AgentId, side: Side, price: Price, qty: u64, ts: Nanos) -> Self {
        Order {
            id,
            agent_id,
            side,
            kind: OrderKind::Limit,
            price: Some(price),
            qty,
            ts,
            seq: 0,
        }
    }
}

/// One match between an incoming (taker) order and a resting (maker) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub taker_order_id: OrderId,
    pub maker_order_id: OrderId,
    pub taker_agent_id: AgentId,
    pub maker_agent_id: AgentId,
    pub taker_side: Side,
    pub price: Price,
    pub qty: u64,
    pub ts: Nanos,
}

#[derive(Debug, Clone)]
pub struct BookLevel {
    pub price: Price,
    pub queue: VecDeque<Order>,
    pub total_qty: u64,
}

impl BookLevel {
    fn new(price: Price) -> Self {
        BookLevel {
            price,
            queue: VecDeque::new(),
            total_qty: 0,
        }
    }
}

/// Aggregated top-of-book view, best level first on each side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub ts: Nanos,
    pub bids: Vec<(Price, u64)>,
    pub asks: Vec<(Price, u64)>,
    pub depth: usize,
}

impl BookSnapshot {
    pub fn side(&self, side: Side) -> &[(Price, u64)] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.first().map(|&(p, _)| p)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.first().map(|&(p, _)| p)
    }

    /// Twice the mid price, which is always an integer number of ticks.
    pub fn mid_x2(&self) -> Option<i64> {
        Some(self.best_bid()?.0 + self.best_ask()?.0)
    }

    pub fn mid(&self) -> Option<f64> {
        self.mid_x2().map(|m| m as f64 / 2.0)
    }

    pub fn spread(&self) -> Option<i64> {
        Some(self.best_ask()?.0 - self.best_bid()?.0)
    }

    /// Cumulative volume over the first `k` levels; levels past the snapshot contribute 0.
    pub fn total_depth(&self, side: Side, k: usize) -> u64 {
        self.side(side).iter().take(k).map(|&(_, q)| q).sum()
    }

    pub fn volume_imbalance(&self, side: Side, k: usize) -> f64 {
        imbalance(self.total_depth(side, k), self.total_depth(side.opposite(), k))
    }
}

/// `own / (own + other)`, or 0.5 when both are empty.
pub fn imbalance(own: u64, other: u64) -> f64 {
    let total = own + other;
    if total == 0 {
        0.5
    } else {
        own as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitOutcome {
    pub fills: Vec<Fill>,
    pub resting_qty: u64,
}

/// How the "depth consumed" by a market order is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMetric {
    /// Distinct price levels that produced fills, minus one.
    #[default]
    Levels,
    /// Ticks between the first and the last fill price.
    Ticks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketOutcome {
    pub order_id: OrderId,
    pub fills: Vec<Fill>,
    pub filled_qty: u64,
    /// Σ price·qty over the fills, in ticks·shares.
    pub notional: i128,
    pub levels_touched: u32,
    pub price_span_ticks: i64,
    pub unfilled: u64,
}

impl MarketOutcome {
    pub fn avg_price(&self) -> Option<f64> {
        (self.filled_qty > 0).then(|| self.notional as f64 / self.filled_qty as f64)
    }

    pub fn depth_consumed(&self, metric: DepthMetric) -> u64 {
        match metric {
            DepthMetric::Levels => self.levels_touched.saturating_sub(1) as u64,
            DepthMetric::Ticks => self.price_span_ticks as u64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LobError {
    #[error("duplicate order id {0}")]
    DuplicateOrderId(OrderId),
    #[error("invalid order: {0}")]
    InvalidOrder(&'static str),
    #[error("depth level {k} out of range 1..={max}")]
    DepthOutOfRange { k: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BookEventKind {
    Limit,
    Market,
    Cancel,
    Fill,
}

impl BookEventKind {
    fn as_str(self) -> &'static str {
        match self {
            BookEventKind::Limit => "limit",
            BookEventKind::Market => "market",
            BookEventKind::Cancel => "cancel",
            BookEventKind::Fill => "fill",
        }
    }
}

/// One row of the optional book event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookEvent {
    pub ts: Nanos,
    pub kind: BookEventKind,
    pub side: Side,
    pub price: Option<Price>,
    pub qty: u64,
    pub order_id: OrderId,
    pub agent_id: AgentId,
}

pub const EVENT_LOG_HEADER: &str = "ts,kind,side,price,qty,order_id,agent_id";

pub fn write_event_log<W: Write>(mut w: W, events: &[BookEvent]) -> io::Result<()> {
    writeln!(w, "{EVENT_LOG_HEADER}")?;
    for e in events {
        let price = e.price.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.ts,
            e.kind.as_str(),
            e.side.as_str(),
            price,
            e.qty,
            e.order_id,
            e.agent_id
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct OrderBook {
    bids: BTreeMap<Price, BookLevel>,
    asks: BTreeMap<Price, BookLevel>,
    index: HashMap<OrderId, (Side, Price)>,
    seen_ids: HashSet<OrderId>,
    next_id: OrderId,
    next_seq: u64,
    max_depth: usize,
    now: Nanos,
    log: Option<Vec<BookEvent>>,
}

impl Default for OrderBook {
    fn default() -> Self {
        OrderBook::new(DEFAULT_DEPTH)
    }
}

impl OrderBook {
    pub fn new(max_depth: usize) -> Self {
        assert!(max_depth >= 1, "book depth must be at least 1");
        OrderBook {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            index: HashMap::new(),
            seen_ids: HashSet::new(),
            next_id: 1,
            next_seq: 0,
            max_depth,
            now: 0,
            log: None,
        }
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn enable_event_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn take_event_log(&mut self) -> Vec<BookEvent> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn set_time(&mut self, ts: Nanos) {
        self.now = ts;
    }

    /// Allocates a fresh order id that has never been used in this book.
    pub fn next_order_id(&mut self) -> OrderId {
        while self.seen_ids.contains(&self.next_id) {
            self.next_id += 1;
        }
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn record(&mut self, ev: BookEvent) {
        if let Some(log) = self.log.as_mut() {
            log.push(ev);
        }
    }

    fn register_id(&mut self, id: OrderId) -> Result<(), LobError> {
        if !self.seen_ids.insert(id) {
            return Err(LobError::DuplicateOrderId(id));
        }
        if id >= self.next_id {
            self.next_id = id + 1;
        }
        Ok(())
    }

    fn ladder(&self, side: Side) -> &BTreeMap<Price, BookLevel> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    /// Levels of one side, best first.
    pub fn levels(&self, side: Side) -> Box<dyn Iterator<Item = &BookLevel> + '_> {
        match side {
            Side::Bid => Box::new(self.bids.values().rev()),
            Side::Ask => Box::new(self.asks.values()),
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    pub fn mid_x2(&self) -> Option<i64> {
        Some(self.best_bid()?.0 + self.best_ask()?.0)
    }

    pub fn mid_price(&self) -> Option<f64> {
        self.mid_x2().map(|m| m as f64 / 2.0)
    }

    pub fn spread(&self) -> Option<i64> {
        Some(self.best_ask()?.0 - self.best_bid()?.0)
    }

    fn check_k(&self, k: usize) -> Result<(), LobError> {
        if k == 0 || k > self.max_depth {
            Err(LobError::DepthOutOfRange { k, max: self.max_depth })
        } else {
            Ok(())
        }
    }

    pub fn total_depth(&self, side: Side, k: usize) -> Result<u64, LobError> {
        self.check_k(k)?;
        Ok(self.levels(side).take(k).map(|l| l.total_qty).sum())
    }

    /// Numerator and denominator of the volume imbalance at depth `k`.
    pub fn volume_imbalance_parts(&self, side: Side, k: usize) -> Result<(u64, u64), LobError> {
        let own = self.total_depth(side, k)?;
        let other = self.total_depth(side.opposite(), k)?;
        Ok((own, own + other))
    }

    pub fn volume_imbalance(&self, side: Side, k: usize) -> Result<f64, LobError> {
        let (own, total) = self.volume_imbalance_parts(side, k)?;
        Ok(imbalance(own, total - own))
    }

    pub fn total_resting(&self, side: Side) -> u64 {
        self.ladder(side).values().map(|l| l.total_qty).sum()
    }

    pub fn is_resting(&self, id: OrderId) -> bool {
        self.index.contains_key(&id)
    }

    /// Resting orders owned by `agent`, in no particular order.
    pub fn open_orders(&self, agent: AgentId) -> Vec<&Order> {
        self.bids
            .values()
            .chain(self.asks.values())
            .flat_map(|l| l.queue.iter())
            .filter(|o| o.agent_id == agent)
            .collect()
    }

    pub fn snapshot(&self, depth: usize) -> BookSnapshot {
        let take = |side| {
            self.levels(side)
                .take(depth)
                .map(|l| (l.price, l.total_qty))
                .collect::<Vec<_>>()
        };
        BookSnapshot {
            ts: self.now,
            bids: take(Side::Bid),
            asks: take(Side::Ask),
            depth,
        }
    }

    pub fn submit_limit(&mut self, mut order: Order) -> Result<LimitOutcome, LobError> {
        if order.kind != OrderKind::Limit {
            return Err(LobError::InvalidOrder("submit_limit requires a limit order"));
        }
        if order.qty == 0 {
            return Err(LobError::InvalidOrder("quantity must be positive"));
        }
        let price = match order.price {
            Some(p) if p.0 > 0 => p,
            _ => return Err(LobError::InvalidOrder("limit price must be positive")),
        };
        self.register_id(order.id)?;
        self.now = order.ts;
        order.seq = self.next_seq;
        self.next_seq += 1;
        self.record(BookEvent {
            ts: order.ts,
            kind: BookEventKind::Limit,
            side: order.side,
            price: Some(price),
            qty: order.qty,
            order_id: order.id,
            agent_id: order.agent_id,
        });

        let (fills, remaining) = self.sweep(order.side, Some(price), order.qty, order.id, order.agent_id, order.ts);
        if remaining > 0 {
            order.qty = remaining;
            let side = order.side;
            let id = order.id;
            let ladder = match side {
                Side::Bid => &mut self.bids,
                Side::Ask => &mut self.asks,
            };
            let level = ladder.entry(price).or_insert_with(|| BookLevel::new(price));
            level.total_qty += remaining;
            level.queue.push_back(order);
            self.index.insert(id, (side, price));
        }
        Ok(LimitOutcome {
            fills,
            resting_qty: remaining,
        })
    }

    /// Executes immediately against the opposite side; whatever cannot be filled is dropped.
    pub fn submit_market(
        &mut self,
        side: Side,
        qty: u64,
        agent_id: AgentId,
        ts: Nanos,
    ) -> Result<MarketOutcome, LobError> {
        if qty == 0 {
            return Err(LobError::InvalidOrder("quantity must be positive"));
        }
        let id = self.next_order_id();
        self.seen_ids.insert(id);
        self.now = ts;
        self.next_seq += 1;
        self.record(BookEvent {
            ts,
            kind: BookEventKind::Market,
            side,
            price: None,
            qty,
            order_id: id,
            agent_id,
        });
        let (fills, remaining) = self.sweep(side, None, qty, id, agent_id, ts);

        let mut levels_touched = 0u32;
        let mut last_price = None;
        let mut notional = 0i128;
        for f in &fills {
            if last_price != Some(f.price) {
                levels_touched += 1;
                last_price = Some(f.price);
            }
            notional += f.price.0 as i128 * f.qty as i128;
        }
        let price_span_ticks = match (fills.first(), fills.last()) {
            (Some(a), Some(b)) => (b.price.0 - a.price.0).abs(),
            _ => 0,
        };
        Ok(MarketOutcome {
            order_id: id,
            filled_qty: qty - remaining,
            fills,
            notional,
            levels_touched,
            price_span_ticks,
            unfilled: remaining,
        })
    }

    /// Matches an incoming order against the opposite ladder, best level first and
    /// FIFO within a level, while the limit (if any) still crosses.
    fn sweep(
        &mut self,
        taker_side: Side,
        limit: Option<Price>,
        mut qty: u64,
        taker_id: OrderId,
        taker_agent: AgentId,
        ts: Nanos,
    ) -> (Vec<Fill>, u64) {
        let mut fills = Vec::new();
        while qty > 0 {
            let best = match taker_side {
                Side::Bid => self.asks.keys().next().copied(),
                Side::Ask => self.bids.keys().next_back().copied(),
            };
            let Some(level_price) = best else { break };
            let crosses = match (taker_side, limit) {
                (_, None) => true,
                (Side::Bid, Some(l)) => level_price <= l,
                (Side::Ask, Some(l)) => level_price >= l,
            };
            if !crosses {
                break;
            }
            let ladder = match taker_side {
                Side::Bid => &mut self.asks,
                Side::Ask => &mut self.bids,
            };
            let level = ladder.get_mut(&level_price).expect("best level exists");
            while qty > 0 {
                let Some(maker) = level.queue.front_mut() else {
                    break;
                };
                let traded = qty.min(maker.qty);
                maker.qty -= traded;
                level.total_qty -= traded;
                qty -= traded;
                fills.push(Fill {
                    taker_order_id: taker_id,
                    maker_order_id: maker.id,
                    taker_agent_id: taker_agent,
                    maker_agent_id: maker.agent_id,
                    taker_side,
                    price: level_price,
                    qty: traded,
                    ts,
                });
                if maker.qty == 0 {
                    let done = level.queue.pop_front().expect("front exists");
                    self.index.remove(&done.id);
                }
            }
            if level.queue.is_empty() {
                ladder.remove(&level_price);
            }
        }
        if let Some(log) = self.log.as_mut() {
            for f in &fills {
                log.push(BookEvent {
                    ts,
                    kind: BookEventKind::Fill,
                    side: taker_side,
                    price: Some(f.price),
                    qty: f.qty,
                    order_id: f.maker_order_id,
                    agent_id: f.maker_agent_id,
                });
            }
        }
        (fills, qty)
    }

    /// Removes a resting order. Returns false for unknown, filled or already cancelled ids.
    pub fn cancel(&mut self, id: OrderId) -> bool {
        let Some((side, price)) = self.index.remove(&id) else {
            return false;
        };
        let ladder = match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        };
        let level = ladder.get_mut(&price).expect("indexed level exists");
        let pos = level
            .queue
            .iter()
            .position(|o| o.id == id)
            .expect("indexed order is queued");
        let order = level.queue.remove(pos).expect("position is valid");
        level.total_qty -= order.qty;
        if level.queue.is_empty() {
            ladder.remove(&price);
        }
        let ts = self.now;
        self.record(BookEvent {
            ts,
            kind: BookEventKind::Cancel,
            side,
            price: Some(price),
            qty: order.qty,
            order_id: id,
            agent_id: order.agent_id,
        });
        true
    }
}
