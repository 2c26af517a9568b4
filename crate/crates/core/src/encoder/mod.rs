//! Contextual encoders behind one adapter trait.
//!
//! The toolkit only needs an encoder to map a [`TransformedInput`] to one
//! hidden row per subword and, for training and saliency, to back-propagate a
//! gradient on those rows. [`TinyEncoder`] is a small seeded backend that runs
//! everywhere; pretrained transformers plug in by implementing [`Encoder`].

mod tiny;
mod tokenizer;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::transform::TransformedInput;

pub use tiny::{TinyConfig, TinyEncoder, TinyTrace};
pub use tokenizer::{SpecialTokens, TokenizerHandle, DEFAULT_ASPECT_CLOSE, DEFAULT_ASPECT_OPEN};

/// Hidden states, one row per subword.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Array2<f64>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.hidden.ncols()
    }
}

pub trait Encoder {
    /// Whatever the backward pass needs from the forward pass.
    type Trace;

    fn hidden_width(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn max_positions(&self) -> usize;

    /// Input embeddings, one row per subword.
    fn embed(&self, ti: &TransformedInput) -> Result<Array2<f64>>;

    /// Contextualizes precomputed input embeddings.
    fn forward(&self, ti: &TransformedInput, inputs: Array2<f64>) -> Result<(EncoderOutput, Self::Trace)>;

    /// Accumulates parameter gradients for `d_hidden` and returns the gradient
    /// with respect to the input embeddings.
    fn backward(&mut self, trace: &Self::Trace, d_hidden: &Array2<f64>) -> Result<Array2<f64>>;

    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Extends the token embedding table to `new_size` rows.
    fn grow_vocab(&mut self, new_size: usize, seed: u64) -> Result<()>;

    /// Whether gradients with respect to the inputs are available.
    fn differentiable(&self) -> bool {
        true
    }

    fn encode(&self, ti: &TransformedInput) -> Result<EncoderOutput> {
        Ok(self.encode_traced(ti)?.0)
    }

    fn encode_traced(&self, ti: &TransformedInput) -> Result<(EncoderOutput, Self::Trace)> {
        let x = self.embed(ti)?;
        self.forward(ti, x)
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Registers the aspect markers and grows the encoder's embedding table to
/// match. New rows start at the mean embedding plus seeded noise.
pub fn register_markers<E: Encoder>(
    tok: &TokenizerHandle,
    encoder: &mut E,
    seed: u64,
) -> Result<TokenizerHandle> {
    let tok = tok.register_markers()?;
    if encoder.vocab_size() < tok.vocab_size() {
        encoder.grow_vocab(tok.vocab_size(), seed)?;
    }
    Ok(tok)
}

/// Backend selector, written `tiny:<seed>` or `pretrained:<model-name>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Backend {
    Tiny { seed: u64 },
    Pretrained { model: String },
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("tiny", seed)) => seed
                .parse()
                .map(|seed| Backend::Tiny { seed })
                .map_err(|_| Error::Config(format!("bad tiny encoder seed {seed:?}"))),
            Some(("pretrained", model)) if !model.is_empty() => Ok(Backend::Pretrained {
                model: model.to_string(),
            }),
            _ => Err(Error::Config(format!(
                "encoder backend {s:?} is not tiny:<seed> or pretrained:<model-name>"
            ))),
        }
    }
}

impl TryFrom<String> for Backend {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> Self {
        b.to_string()
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Tiny { seed } => write!(f, "tiny:{seed}"),
            Backend::Pretrained { model } => write!(f, "pretrained:{model}"),
        }
    }
}
