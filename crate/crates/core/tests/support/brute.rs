//! Reference price-time matcher built on a flat list of resting orders, plus
//! a random operation generator shared by property tests.

#![allow(dead_code)]

use std::collections::HashMap;

use lobsim_core::lob::{Order, OrderBook, Price, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Limit {
        side: Side,
        price: i64,
        qty: u64,
    },
    Market {
        side: Side,
        qty: u64,
    },
    /// Cancel the order submitted by operation `target % ops_so_far`.
    Cancel {
        target: usize,
    },
}

/// `(taker op index, maker op index, price, qty)`.
pub type Trade = (usize, usize, i64, u64);

pub fn random_ops(seed: u64, max_len: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| {
            let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
            match rng.random_range(0..10) {
                0..=5 => Op::Limit {
                    side,
                    price: rng.random_range(95..=105),
                    qty: rng.random_range(1..=20),
                },
                6..=7 => Op::Market {
                    side,
                    qty: rng.random_range(1..=40),
                },
                _ => Op::Cancel {
                    target: rng.random_range(0..usize::MAX),
                },
            }
        })
        .collect()
}

struct Resting {
    op: usize,
    side: Side,
    price: i64,
    qty: u64,
    seq: usize,
}

/// Aggregated `(price, qty)` levels, best first: bids then asks.
pub type Levels = (Vec<(i64, u64)>, Vec<(i64, u64)>);

fn levels_of(resting: &[Resting]) -> Levels {
    let mut bids: Vec<(i64, u64)> = Vec::new();
    let mut asks: Vec<(i64, u64)> = Vec::new();
    for r in resting {
        let side = if r.side == Side::Bid { &mut bids } else { &mut asks };
        match side.iter_mut().find(|(p, _)| *p == r.price) {
            Some(l) => l.1 += r.qty,
            None => side.push((r.price, r.qty)),
        }
    }
    bids.sort_by(|a, b| b.0.cmp(&a.0));
    asks.sort_by_key(|a| a.0);
    (bids, asks)
}

pub fn run_brute(ops: &[Op]) -> (Vec<Trade>, Levels) {
    let mut resting: Vec<Resting> = Vec::new();
    let mut trades = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let (side, limit, mut qty) = match *op {
            Op::Limit { side, price, qty } => (side, Some(price), qty),
            Op::Market { side, qty } => (side, None, qty),
            Op::Cancel { target } => {
                if i > 0 {
                    let t = target % i;
                    resting.retain(|r| r.op != t);
                }
                continue;
            }
        };
        while qty > 0 {
            // Best opposite order by price, then arrival.
            let best = resting
                .iter()
                .enumerate()
                .filter(|(_, r)| r.side != side)
                .filter(|(_, r)| match (side, limit) {
                    (_, None) => true,
                    (Side::Bid, Some(l)) => r.price <= l,
                    (Side::Ask, Some(l)) => r.price >= l,
                })
                .min_by_key(|(_, r)| (if side == Side::Bid { r.price } else { -r.price }, r.seq))
                .map(|(j, _)| j);
            let Some(j) = best else { break };
            let m = &mut resting[j];
            let q = qty.min(m.qty);
            trades.push((i, m.op, m.price, q));
            m.qty -= q;
            qty -= q;
            if m.qty == 0 {
                resting.remove(j);
            }
        }
        if let (Some(price), true) = (limit, qty > 0) {
            resting.push(Resting {
                op: i,
                side,
                price,
                qty,
                seq: i,
            });
        }
    }
    (trades, levels_of(&resting))
}

pub fn run_engine(ops: &[Op]) -> (Vec<Trade>, Levels) {
    let mut book = OrderBook::new(1000);
    let mut op_of_id = HashMap::new();
    let mut id_of_op = HashMap::new();
    let mut trades = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let fills = match *op {
            Op::Limit { side, price, qty } => {
                let id = book.next_order_id();
                op_of_id.insert(id, i);
                id_of_op.insert(i, id);
                book.submit_limit(Order::limit(id, 1, side, Price(price), qty, i as i64))
                    .unwrap()
                    .fills
            }
            Op::Market { side, qty } => {
                let out = book.submit_market(side, qty, 1, i as i64).unwrap();
                op_of_id.insert(out.order_id, i);
                out.fills
            }
            Op::Cancel { target } => {
                if i > 0 {
                    if let Some(id) = id_of_op.get(&(target % i)) {
                        book.cancel(*id);
                    }
                }
                continue;
            }
        };
        for f in fills {
            trades.push((
                op_of_id[&f.taker_order_id],
                op_of_id[&f.maker_order_id],
                f.price.0,
                f.qty,
            ));
        }
    }
    let snap = book.snapshot(1000);
    let conv = |v: &[(Price, u64)]| v.iter().map(|(p, q)| (p.0, *q)).collect();
    (trades, (conv(&snap.bids), conv(&snap.asks)))
}

/// Random book built only from non-crossing limit orders.
pub fn random_book(seed: u64, depth: usize) -> OrderBook {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = OrderBook::new(depth);
    let n = rng.random_range(0..60);
    for _ in 0..n {
        let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        let price = match side {
            Side::Bid => rng.random_range(80..=100),
            Side::Ask => rng.random_range(101..=121),
        };
        let id = book.next_order_id();
        book.submit_limit(Order::limit(id, 0, side, Price(price), rng.random_range(1..=500), 0))
            .unwrap();
    }
    book
}
