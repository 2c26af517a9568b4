//! Aspect feature induction, MLP heads and the training loss.
//!
//! The aspect feature is the mean of the hidden states of the first and last
//! aspect subwords. Sentiment classification feeds it to the head directly;
//! opinion extraction concatenates it to every token state before tagging.
//! The `cls` and `token_only` modes are the ablation baselines that skip the
//! induction step.

mod head;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::encoder::{Encoder, EncoderOutput};
use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax_rows, Param};
use crate::transform::TransformedInput;

pub use head::{HeadTrace, MlpHead};

pub const N_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScFeatureMode {
    MeanPool,
    Cls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OeFeatureMode {
    Concat,
    TokenOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub task: Task,
    pub sc_feature_mode: ScFeatureMode,
    pub oe_feature_mode: OeFeatureMode,
    /// Encoder hidden width.
    pub hidden_width: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub lambda_l2: f64,
}

impl HeadConfig {
    pub fn new(task: Task, hidden_width: usize) -> Self {
        HeadConfig {
            task,
            sc_feature_mode: ScFeatureMode::MeanPool,
            oe_feature_mode: OeFeatureMode::Concat,
            hidden_width,
            mlp_hidden: hidden_width,
            dropout: 0.1,
            lambda_l2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.hidden_width == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("head widths must be positive".into()));
        }
        if self.lambda_l2 < 0.0 || !self.lambda_l2.is_finite() {
            return Err(Error::Config(format!("lambda_l2 {} must be non-negative", self.lambda_l2)));
        }
        Ok(())
    }

    /// Width of the head input.
    pub fn input_width(&self) -> usize {
        match (self.task, self.oe_feature_mode) {
            (Task::Oe, OeFeatureMode::Concat) => 2 * self.hidden_width,
            _ => self.hidden_width,
        }
    }
}

/// Logits and class probabilities; one row for classification, one row per
/// subword for tagging.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

impl Prediction {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let probs = softmax_rows(&logits);
        Prediction { logits, probs }
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                    .0
            })
            .collect()
    }
}

fn check_row(h: &EncoderOutput, i: usize) -> Result<()> {
    if i >= h.len() {
        return Err(Error::Contract(format!(
            "aspect index {i} outside {} hidden rows",
            h.len()
        )));
    }
    Ok(())
}

/// Mean of the hidden rows at `first` and `last`.
pub fn induce_aspect_feature(h: &EncoderOutput, first: usize, last: usize) -> Result<Array1<f64>> {
    check_row(h, first)?;
    check_row(h, last)?;
    Ok((&h.hidden.row(first) + &h.hidden.row(last)) / 2.0)
}

/// Token features for tagging: `[h_i ; aspect]` per row in concat mode, the
/// hidden states unchanged otherwise.
pub fn induce_oe_features(h: &EncoderOutput, aspect: &Array1<f64>, mode: OeFeatureMode) -> Result<Array2<f64>> {
    match mode {
        OeFeatureMode::TokenOnly => Ok(h.hidden.clone()),
        OeFeatureMode::Concat => {
            if aspect.len() != h.width() {
                return Err(Error::Contract(format!(
                    "aspect feature of width {} for hidden width {}",
                    aspect.len(),
                    h.width()
                )));
            }
            let tiled = aspect
                .view()
                .insert_axis(Axis(0))
                .broadcast((h.len(), aspect.len()))
                .expect("broadcast a row")
                .to_owned();
            Ok(concatenate(Axis(1), &[h.hidden.view(), tiled.view()]).expect("equal row counts"))
        }
    }
}

/// Mean cross-entropy over the rows whose gold label is present, plus
/// `lambda_l2 * l2_sum`. Computed from logits with log-sum-exp.
pub fn loss(pred: &Prediction, gold: &[Option<usize>], lambda_l2: f64, l2_sum: f64) -> Result<f64> {
    let (sum, n) = cross_entropy_sum(&pred.logits, gold)?;
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(mean + lambda_l2 * l2_sum)
}

pub(crate) fn cross_entropy_sum(logits: &Array2<f64>, gold: &[Option<usize>]) -> Result<(f64, usize)> {
    if gold.len() != logits.nrows() {
        return Err(Error::Contract(format!(
            "{} gold labels for {} prediction rows",
            gold.len(),
            logits.nrows()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0;
    for (row, g) in logits.rows().into_iter().zip(gold) {
        let Some(g) = *g else { continue };
        if g >= row.len() {
            return Err(Error::Contract(format!("gold class {g} out of range")));
        }
        let row = row.to_vec();
        sum += log_sum_exp(&row) - row[g];
        n += 1;
    }
    Ok((sum, n))
}

/// Encoder plus head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectModel<E> {
    pub encoder: E,
    pub head: MlpHead,
    pub config: HeadConfig,
}

/// Intermediate values of one forward pass needed for backward.
pub struct ForwardTrace<T> {
    encoder: T,
    head: HeadTrace,
    aspect: (usize, usize),
    len: usize,
}

impl<E: Encoder> AspectModel<E> {
    pub fn new(encoder: E, mut config: HeadConfig, seed: u64) -> Result<Self> {
        config.hidden_width = encoder.hidden_width();
        config.validate()?;
        let head = MlpHead::new(config.input_width(), config.mlp_hidden, N_CLASSES, config.dropout, seed);
        Ok(AspectModel { encoder, head, config })
    }

    fn features(&self, h: &EncoderOutput, ti: &TransformedInput) -> Result<Array2<f64>> {
        match self.config.task {
            Task::Sc => {
                let f = match self.config.sc_feature_mode {
                    ScFeatureMode::MeanPool => induce_aspect_feature(h, ti.aspect_first, ti.aspect_last)?,
                    ScFeatureMode::Cls => {
                        check_row(h, 0)?;
                        h.hidden.row(0).to_owned()
                    }
                };
                Ok(f.insert_axis(Axis(0)))
            }
            Task::Oe => {
                let aspect = match self.config.oe_feature_mode {
                    OeFeatureMode::Concat => induce_aspect_feature(h, ti.aspect_first, ti.aspect_last)?,
                    OeFeatureMode::TokenOnly => Array1::zeros(h.width()),
                };
                induce_oe_features(h, &aspect, self.config.oe_feature_mode)
            }
        }
    }

    /// Forward pass from given input embeddings. `dropout` carries the RNG in
    /// training mode.
    pub fn forward_embedded(
        &self,
        ti: &TransformedInput,
        inputs: Array2<f64>,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Prediction, ForwardTrace<E::Trace>)> {
        let (h, enc_trace) = self.encoder.forward(ti, inputs)?;
        let x = self.features(&h, ti)?;
        let (logits, head_trace) = self.head.forward(&x, dropout)?;
        Ok((
            Prediction::from_logits(logits),
            ForwardTrace {
                encoder: enc_trace,
                head: head_trace,
                aspect: (ti.aspect_first, ti.aspect_last),
                len: ti.len(),
            },
        ))
    }

    pub fn forward_traced(
        &self,
        ti: &TransformedInput,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Prediction, ForwardTrace<E::Trace>)> {
        let x = self.encoder.embed(ti)?;
        self.forward_embedded(ti, x, dropout)
    }

    /// Inference-mode prediction for the configured task.
    pub fn predict(&self, ti: &TransformedInput) -> Result<Prediction> {
        Ok(self.forward_traced(ti, None)?.0)
    }

    pub fn forward_sc(&self, ti: &TransformedInput) -> Result<Prediction> {
        if self.config.task != Task::Sc {
            return Err(Error::Contract("forward_sc on a tagging model".into()));
        }
        self.predict(ti)
    }

    pub fn forward_oe(&self, ti: &TransformedInput) -> Result<Prediction> {
        if self.config.task != Task::Oe {
            return Err(Error::Contract("forward_oe on a classification model".into()));
        }
        self.predict(ti)
    }

    /// Back-propagates a logit gradient through head, induction and encoder.
    /// Returns the gradient on the input embeddings.
    pub fn backward(&mut self, trace: &ForwardTrace<E::Trace>, d_logits: &Array2<f64>) -> Result<Array2<f64>> {
        let d_x = self.head.backward(&trace.head, d_logits)?;
        let d = self.config.hidden_width;
        let mut d_h = Array2::zeros((trace.len, d));
        let (first, last) = trace.aspect;
        let spread_aspect = |d_h: &mut Array2<f64>, g: Array1<f64>| {
            let half = &g / 2.0;
            let mut r = d_h.row_mut(first);
            r += &half;
            let mut r = d_h.row_mut(last);
            r += &half;
        };
        match self.config.task {
            Task::Sc => {
                let g = d_x.row(0).to_owned();
                match self.config.sc_feature_mode {
                    ScFeatureMode::MeanPool => spread_aspect(&mut d_h, g),
                    ScFeatureMode::Cls => {
                        let mut r = d_h.row_mut(0);
                        r += &g;
                    }
                }
            }
            Task::Oe => match self.config.oe_feature_mode {
                OeFeatureMode::TokenOnly => d_h.assign(&d_x),
                OeFeatureMode::Concat => {
                    d_h.assign(&d_x.slice(s![.., ..d]));
                    let g = d_x.slice(s![.., d..]).sum_axis(Axis(0));
                    spread_aspect(&mut d_h, g);
                }
            },
        }
        self.encoder.backward(&trace.encoder, &d_h)
    }

    /// Training-mode forward and backward for one input. Cross-entropy rows are
    /// scaled by `weight` (1 / contributing rows in the batch). Returns the
    /// unscaled cross-entropy sum and the number of contributing rows.
    pub fn accumulate(
        &mut self,
        ti: &TransformedInput,
        gold: &[Option<usize>],
        weight: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, usize)> {
        let (pred, trace) = self.forward_traced(ti, Some(rng))?;
        let (sum, n) = cross_entropy_sum(&pred.logits, gold)?;
        let mut d_logits = pred.probs.clone();
        for (mut row, g) in d_logits.rows_mut().into_iter().zip(gold) {
            match g {
                Some(g) => {
                    row[*g] -= 1.0;
                    row *= weight;
                }
                None => row.fill(0.0),
            }
        }
        self.backward(&trace, &d_logits)?;
        Ok((sum, n))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn l2_sum(&self) -> f64 {
        self.params().iter().map(|p| p.sum_squares()).sum()
    }

    /// Adds the gradient of `lambda * sum(theta^2)`.
    pub fn add_l2_grad(&mut self, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for p in self.params_mut() {
            let value = p.value.clone();
            p.grad_mut().scaled_add(2.0 * lambda, &value);
        }
    }
}
