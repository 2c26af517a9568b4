//! Aspect-specific context modeling for aspect-based sentiment analysis.
//!
//! The crate covers the whole pipeline: dataset ingestion ([`corpus`]), the
//! four input constructions ([`transform`]), a pluggable contextual encoder
//! ([`encoder`]), aspect feature induction and classification heads
//! ([`model`]), fine-tuning ([`trainer`]), metrics and saliency
//! ([`evaluator`]) and adversarial test-set generation ([`advgen`]).

pub mod advgen;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod trainer;
pub mod transform;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
