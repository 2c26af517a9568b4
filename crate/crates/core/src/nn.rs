//! Dense parameters, affine layers and the AdamW optimizer, with hand-written
//! backward passes. Everything is `f64` so finite-difference checks stay tight.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A trainable matrix with its gradient and first/second moment estimates.
/// Only `value` is persisted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub value: Array2<f64>,
    #[serde(skip)]
    grad: Option<Array2<f64>>,
    #[serde(skip)]
    moments: Option<(Array2<f64>, Array2<f64>)>,
}

impl PartialEq for Param {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        Param {
            value,
            grad: None,
            moments: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Array2::zeros((rows, cols)))
    }

    /// Uniform initialization in `[-bound, bound)`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Param::new(Array2::from_shape_fn((rows, cols), |_| {
            rng.random_range(-bound..bound)
        }))
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        self.grad.as_ref()
    }

    pub fn grad_mut(&mut self) -> &mut Array2<f64> {
        let dim = self.value.raw_dim();
        match &mut self.grad {
            Some(g) if g.raw_dim() == dim => {}
            slot => *slot = Some(Array2::zeros(dim)),
        }
        self.grad.as_mut().expect("allocated above")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            if g.raw_dim() == self.value.raw_dim() {
                g.fill(0.0);
            } else {
                self.grad = None;
            }
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum()
    }

    /// Drops optimizer state, e.g. after the value was resized.
    pub fn reset_state(&mut self) {
        self.grad = None;
        self.moments = None;
    }
}

/// `y = x W + b` applied row-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Linear {
            weight: Param::uniform(input, output, bound, rng),
            bias: Param::zeros(1, output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Param::zeros(input, output),
            bias: Param::zeros(1, output),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value) + &self.bias.value
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        *self.weight.grad_mut() += &x.t().dot(dy);
        *self.bias.grad_mut() += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value.t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

/// Numerically stable row-wise log-sum-exp.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("standard layout"));
        row.mapv_inplace(|v| (v - lse).exp());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW { config, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for p in params {
            let Some(grad) = p.grad.as_ref() else { continue };
            if grad.raw_dim() != p.value.raw_dim() {
                continue;
            }
            let (m, v) = p.moments.get_or_insert_with(|| {
                (Array2::zeros(grad.raw_dim()), Array2::zeros(grad.raw_dim()))
            });
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|w, m, v, &g| {
                    *w -= c.learning_rate * c.weight_decay * *w;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                });
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: Vec<&mut Param>, max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|p| p.grad())
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params {
            if let Some(g) = p.grad.as_mut() {
                g.mapv_inplace(|v| v * scale);
            }
        }
    }
    norm
}

pub fn row(values: &[f64]) -> Array2<f64> {
    Array1::from(values.to_vec()).insert_axis(Axis(0))
}
