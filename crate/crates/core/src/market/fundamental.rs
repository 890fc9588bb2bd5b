//! Mean-reverting fundamental value with compound-Poisson jumps, and the
//! oracle that serves noisy observations of it to agents.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::lob::{AgentId, Nanos};
use crate::seeding;

/// Parameters of `dX = θ(μ − X)dt + σ dW + J dN`, all rates per nanosecond
/// and all levels in cents. Jumps are a 50/50 mixture of
/// `N(jump_mu1, jump_sigma1²)` and `N(−jump_mu1, jump_sigma1²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FundamentalParams {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub jump_mu1: f64,
    pub jump_sigma1: f64,
}

impl Default for FundamentalParams {
    fn default() -> Self {
        FundamentalParams {
            theta: 1.67e-16,
            mu: 100_000.0,
            sigma: 5e-10,
            lambda: 2.77778e-18,
            jump_mu1: 1_000.0,
            jump_sigma1: 50_000f64.sqrt(),
        }
    }
}

impl FundamentalParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        let ok = [self.theta, self.sigma, self.lambda, self.jump_sigma1]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.mu.is_finite()
            && self.jump_mu1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MarketError::Config(
                "fundamental: theta, sigma, lambda, jump_sigma1 must be finite and >= 0".into(),
            ))
        }
    }
}

/// Advances the fundamental by `dt` nanoseconds using the exact OU transition
/// followed by `Poisson(λ dt)` bimodal jumps.
pub fn fundamental_step<R: Rng + ?Sized>(x: f64, dt: Nanos, p: &FundamentalParams, rng: &mut R) -> f64 {
    debug_assert!(dt > 0);
    let dt = dt as f64;
    let (mean, var) = if p.theta > 0.0 {
        let decay = (-p.theta * dt).exp();
        // 1 − e^{−2θdt} loses precision for tiny θdt; exp_m1 keeps it.
        let var = p.sigma * p.sigma * -(-2.0 * p.theta * dt).exp_m1() / (2.0 * p.theta);
        (p.mu + (x - p.mu) * decay, var)
    } else {
        (x, p.sigma * p.sigma * dt)
    };
    let mut next = mean;
    if var > 0.0 {
        next += var.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let rate = p.lambda * dt;
    if rate > 0.0 {
        let jumps = Poisson::new(rate).map(|d| d.sample(rng) as u64).unwrap_or(0);
        for _ in 0..jumps {
            let centre = if rng.random_bool(0.5) { p.jump_mu1 } else { -p.jump_mu1 };
            next += centre + p.jump_sigma1 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    next
}

/// Lazily generated fundamental path shared by every agent of one session.
///
/// The path is extended forward from the latest cached point; all queried
/// timestamps are cached so repeated queries agree.
#[derive(Debug, Clone)]
pub struct Oracle {
    params: FundamentalParams,
    seed: u64,
    rng: ChaCha8Rng,
    path: BTreeMap<Nanos, f64>,
}

impl Oracle {
    pub fn new(params: FundamentalParams, seed: u64) -> Self {
        let mut path = BTreeMap::new();
        path.insert(0, params.mu);
        Oracle {
            rng: seeding::rng_from(seed, &[0x0AC1E]),
            params,
            seed,
            path,
        }
    }

    pub fn params(&self) -> &FundamentalParams {
        &self.params
    }

    /// Fundamental value at `t`. Times before the newest cached point fall back
    /// to the latest cached value at or before `t`.
    pub fn fundamental_at(&mut self, t: Nanos) -> f64 {
        let (&last_t, &last_x) = self.path.iter().next_back().expect("path seeded at t=0");
        if t > last_t {
            let x = fundamental_step(last_x, t - last_t, &self.params, &mut self.rng);
            self.path.insert(t, x);
            return x;
        }
        self.path
            .range(..=t)
            .next_back()
            .map(|(_, &x)| x)
            .unwrap_or(self.params.mu)
    }

    /// Noisy observation for `agent` at `t`. The noise draw is a pure function of
    /// `(seed, agent, t)`, so repeated queries return the same value.
    pub fn observe(&mut self, agent: AgentId, t: Nanos, noise_var: f64) -> f64 {
        let x = self.fundamental_at(t);
        if noise_var <= 0.0 {
            return x;
        }
        let mut rng = seeding::rng_from(self.seed, &[0x0B5, agent as u64, t as u64]);
        let normal = Normal::new(0.0, noise_var.sqrt()).expect("finite positive std");
        x + normal.sample(&mut rng)
    }

    /// Cached path points in time order.
    pub fn path(&self) -> impl Iterator<Item = (Nanos, f64)> + '_ {
        self.path.iter().map(|(&t, &x)| (t, x))
    }
}
