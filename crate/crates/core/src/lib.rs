//! Agent-based limit order book market simulator with an optimal-execution
//! reinforcement-learning environment, a DQN trainer, baseline execution
//! policies and an evaluation harness.

// `!(x > 0.0)` is how the validators reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dqn;
pub mod eval;
pub mod execenv;
pub mod lob;
pub mod market;
pub mod seeding;
pub mod strategies;
