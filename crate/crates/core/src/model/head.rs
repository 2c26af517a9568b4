use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, Param};

/// Fully-connected, ReLU, dropout, fully-connected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub hidden: Linear,
    pub output: Linear,
    pub dropout: f64,
}

pub struct HeadTrace {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Inverted-dropout scale per hidden unit (`0` or `1 / (1 - p)`).
    mask: Option<Array2<f64>>,
    activation: Array2<f64>,
}

impl MlpHead {
    pub fn new(input: usize, hidden: usize, classes: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpHead {
            hidden: Linear::new(input, hidden, &mut rng),
            output: Linear::new(hidden, classes, &mut rng),
            dropout,
        }
    }

    /// All weights and biases zero.
    pub fn zeros(input: usize, hidden: usize, classes: usize, dropout: f64) -> Self {
        MlpHead {
            hidden: Linear::zeros(input, hidden),
            output: Linear::zeros(hidden, classes),
            dropout,
        }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.input_width()
    }

    /// Logits for each input row. Dropout is applied only when an RNG is given.
    pub fn forward(&self, x: &Array2<f64>, rng: Option<&mut ChaCha8Rng>) -> Result<(Array2<f64>, HeadTrace)> {
        if x.ncols() != self.input_width() {
            return Err(Error::Contract(format!(
                "head expects width {}, got {}",
                self.input_width(),
                x.ncols()
            )));
        }
        let pre = self.hidden.forward(x);
        let mut activation = pre.mapv(|v| v.max(0.0));
        let mask = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let m = Array2::from_shape_fn(activation.raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                activation *= &m;
                Some(m)
            }
            _ => None,
        };
        let logits = self.output.forward(&activation);
        Ok((
            logits,
            HeadTrace {
                input: x.clone(),
                pre,
                mask,
                activation,
            },
        ))
    }

    /// Accumulates gradients and returns the gradient on the head input.
    pub fn backward(&mut self, trace: &HeadTrace, d_logits: &Array2<f64>) -> Result<Array2<f64>> {
        if d_logits.nrows() != trace.input.nrows() || d_logits.ncols() != self.output.output_width() {
            return Err(Error::Contract("logit gradient shape mismatch".into()));
        }
        let mut d_act = self.output.backward(&trace.activation, d_logits);
        if let Some(m) = &trace.mask {
            d_act *= m;
        }
        let d_pre = d_act * &trace.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        Ok(self.hidden.backward(&trace.input, &d_pre))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.hidden.params();
        v.extend(self.output.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.hidden.params_mut();
        v.extend(self.output.params_mut());
        v
    }
}
