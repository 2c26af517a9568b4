//! A small trainable encoder for tests and desk-scale runs: token and segment
//! embeddings followed by one windowed mixing layer,
//! `h_i = x_i + tanh(b + sum_k x_{i+k} W_k)` for `k` in `-window..=window`.

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Encoder, EncoderOutput};
use crate::error::{Error, Result};
use crate::nn::Param;
use crate::transform::TransformedInput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TinyConfig {
    pub width: usize,
    pub window: usize,
    pub max_positions: usize,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            width: 32,
            window: 4,
            max_positions: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyEncoder {
    pub config: TinyConfig,
    token_embedding: Param,
    segment_embedding: Param,
    mix: Vec<Param>,
    mix_bias: Param,
}

pub struct TinyTrace {
    token_ids: Vec<u32>,
    segments: Vec<u8>,
    inputs: Array2<f64>,
    activation: Array2<f64>,
}

impl TinyEncoder {
    pub fn new(seed: u64, vocab_size: usize, config: TinyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width;
        let taps = 2 * config.window + 1;
        let mix_bound = (1.0 / (d * taps) as f64).sqrt();
        TinyEncoder {
            config,
            token_embedding: Param::uniform(vocab_size, d, 1.0, &mut rng),
            segment_embedding: Param::uniform(2, d, 0.1, &mut rng),
            mix: (0..taps)
                .map(|_| Param::uniform(d, d, mix_bound, &mut rng))
                .collect(),
            mix_bias: Param::zeros(1, d),
        }
    }

    pub fn token_embeddings(&self) -> &Array2<f64> {
        &self.token_embedding.value
    }

    /// Rows of `x` shifted by `offset` positions, zero-padded.
    fn shifted(x: &Array2<f64>, offset: isize) -> Array2<f64> {
        let len = x.nrows() as isize;
        let mut out = Array2::zeros(x.raw_dim());
        let lo = (-offset).max(0);
        let hi = (len - offset).min(len);
        if lo < hi {
            out.slice_mut(s![lo..hi, ..])
                .assign(&x.slice(s![lo + offset..hi + offset, ..]));
        }
        out
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, isize)> {
        let w = self.config.window as isize;
        (-w..=w).enumerate()
    }
}

impl Encoder for TinyEncoder {
    type Trace = TinyTrace;

    fn hidden_width(&self) -> usize {
        self.config.width
    }

    fn vocab_size(&self) -> usize {
        self.token_embedding.value.nrows()
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn embed(&self, ti: &TransformedInput) -> Result<Array2<f64>> {
        if ti.len() > self.max_positions() {
            return Err(Error::Encoding(format!(
                "sequence of {} exceeds the encoder maximum of {}",
                ti.len(),
                self.max_positions()
            )));
        }
        let vocab = self.vocab_size();
        let segments = ti.segment_ids();
        let mut x = Array2::zeros((ti.len(), self.config.width));
        for (i, (&id, &seg)) in ti.token_ids.iter().zip(&segments).enumerate() {
            if id as usize >= vocab {
                return Err(Error::Encoding(format!(
                    "token id {id} outside a vocabulary of {vocab}"
                )));
            }
            let mut row = x.row_mut(i);
            row += &self.token_embedding.value.row(id as usize);
            row += &self.segment_embedding.value.row(seg as usize);
        }
        Ok(x)
    }

    fn forward(&self, ti: &TransformedInput, inputs: Array2<f64>) -> Result<(EncoderOutput, TinyTrace)> {
        if inputs.nrows() != ti.len() || inputs.ncols() != self.config.width {
            return Err(Error::Contract(format!(
                "input embeddings of shape {:?} for a length-{} input of width {}",
                inputs.dim(),
                ti.len(),
                self.config.width
            )));
        }
        let mut pre = Array2::zeros(inputs.raw_dim());
        pre += &self.mix_bias.value;
        for (k, offset) in self.offsets() {
            pre += &Self::shifted(&inputs, offset).dot(&self.mix[k].value);
        }
        let activation = pre.mapv(f64::tanh);
        let hidden = &inputs + &activation;
        Ok((
            EncoderOutput { hidden },
            TinyTrace {
                token_ids: ti.token_ids.clone(),
                segments: ti.segment_ids(),
                inputs,
                activation,
            },
        ))
    }

    fn backward(&mut self, trace: &TinyTrace, d_hidden: &Array2<f64>) -> Result<Array2<f64>> {
        if d_hidden.dim() != trace.inputs.dim() {
            return Err(Error::Contract("hidden gradient shape mismatch".into()));
        }
        let d_pre = d_hidden * &trace.activation.mapv(|a| 1.0 - a * a);
        *self.mix_bias.grad_mut() += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_x = d_hidden.clone();
        let offsets: Vec<_> = self.offsets().collect();
        for (k, offset) in offsets {
            let shifted = Self::shifted(&trace.inputs, offset);
            *self.mix[k].grad_mut() += &shifted.t().dot(&d_pre);
            let d_shifted = d_pre.dot(&self.mix[k].value.t());
            d_x += &Self::shifted(&d_shifted, -offset);
        }
        {
            let tok_grad = self.token_embedding.grad_mut();
            for (i, &id) in trace.token_ids.iter().enumerate() {
                let mut row = tok_grad.row_mut(id as usize);
                row += &d_x.row(i);
            }
        }
        let seg_grad = self.segment_embedding.grad_mut();
        for (i, &seg) in trace.segments.iter().enumerate() {
            let mut row = seg_grad.row_mut(seg as usize);
            row += &d_x.row(i);
        }
        Ok(d_x)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.token_embedding, &self.segment_embedding, &self.mix_bias];
        v.extend(self.mix.iter());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![
            &mut self.token_embedding,
            &mut self.segment_embedding,
            &mut self.mix_bias,
        ];
        v.extend(self.mix.iter_mut());
        v
    }

    fn grow_vocab(&mut self, new_size: usize, seed: u64) -> Result<()> {
        let old = self.vocab_size();
        if new_size <= old {
            return Ok(());
        }
        let d = self.config.width;
        let mean = self
            .token_embedding
            .value
            .mean_axis(Axis(0))
            .unwrap_or_else(|| ndarray::Array1::zeros(d));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Array2::zeros((new_size, d));
        table.slice_mut(s![..old, ..]).assign(&self.token_embedding.value);
        for i in old..new_size {
            for j in 0..d {
                table[[i, j]] = mean[j] + rng.random_range(-0.02..0.02);
            }
        }
        self.token_embedding = Param::new(table);
        Ok(())
    }
}
