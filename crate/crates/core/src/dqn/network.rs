//! Fully connected Q-network with ReLU hidden layers and a linear head.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its row-major weight matrix (`out × in`) followed by its bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DqnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-sample data needed for one squared TD error term.
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl QNetwork {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(
            sizes.len() >= 2 && sizes.iter().all(|&s| s > 0),
            "need at least input and output sizes"
        );
        QNetwork {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation for weights and biases.
    pub fn random<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = rng.random_range(-bound..bound);
            }
            off += n;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, DqnError> {
        if sizes.len() < 2 || param_count(sizes) != params.len() {
            return Err(DqnError::Shape(format!(
                "{} parameters do not fit layer sizes {sizes:?}",
                params.len()
            )));
        }
        Ok(QNetwork {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, s: &[f64]) -> Result<(), DqnError> {
        if s.len() != self.input_dim() {
            return Err(DqnError::Shape(format!(
                "input length {} != {}",
                s.len(),
                self.input_dim()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(DqnError::NonFiniteInput);
        }
        Ok(())
    }

    /// Activations of every layer, input first. Hidden layers are post-ReLU.
    fn activations(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(s.to_vec());
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = acts.last().expect("input pushed");
            let mut y = bias.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if l < last {
                    *yo = yo.max(0.0);
                }
            }
            acts.push(y);
            off += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>, DqnError> {
        self.check_input(s)?;
        Ok(self.forward_unchecked(s))
    }

    pub(crate) fn forward_unchecked(&self, s: &[f64]) -> Vec<f64> {
        self.activations(s).pop().expect("output layer")
    }

    /// Mean of `(target − Q(s, a))²` over the batch.
    pub fn loss(&self, batch: &[Sample<'_>]) -> f64 {
        batch
            .iter()
            .map(|b| (b.target - self.forward_unchecked(b.state)[b.action]).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> Result<(f64, Vec<f64>), DqnError> {
        if batch.is_empty() {
            return Err(DqnError::Shape("empty batch".into()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for b in batch {
            self.check_input(b.state)?;
            if b.action >= self.output_dim() {
                return Err(DqnError::Shape(format!("action {} out of range", b.action)));
            }
            let acts = self.activations(b.state);
            let q = acts[n_layers][b.action];
            let err = q - b.target;
            loss += err * err;
            // dL/dq for the taken action only.
            let mut delta = vec![0.0; self.output_dim()];
            delta[b.action] = 2.0 * err / n;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let o = offsets[l];
                let x = &acts[l];
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[o + j * n_in..o + (j + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    grad[o + n_in * n_out + j] += d;
                }
                if l > 0 {
                    let weights = &self.params[o..o + n_in * n_out];
                    let mut prev = vec![0.0; n_in];
                    for j in 0..n_out {
                        let d = delta[j];
                        if d == 0.0 {
                            continue;
                        }
                        for (p, w) in prev.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                            *p += d * w;
                        }
                    }
                    // ReLU derivative from the post-activation value.
                    for (p, a) in prev.iter_mut().zip(x) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss / n, grad))
    }
}

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let n = if matches!(kind, OptimizerKind::Adam { .. }) {
            n_params
        } else {
            0
        };
        Optimizer {
            kind,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
