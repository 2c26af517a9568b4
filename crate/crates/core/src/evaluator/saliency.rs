use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::model::AspectModel;
use crate::transform::{Tag, TransformedInput};

/// Per-subword gradient norms, scaled so the largest is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub instance_id: String,
    pub subtokens: Vec<String>,
    pub scores: Vec<f64>,
}

impl SaliencyMap {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Raw (unnormalized) gradient norm of the decision score with respect to
/// each input embedding row. Classification differentiates the predicted
/// class logit; tagging differentiates the summed B logit.
pub fn saliency_raw<E: Encoder + Clone>(model: &AspectModel<E>, ti: &TransformedInput) -> Result<Vec<f64>> {
    if !model.encoder.differentiable() {
        return Err(Error::Unsupported("saliency needs a differentiable encoder".into()));
    }
    let mut model = model.clone();
    model.zero_grad();
    let (pred, trace) = model.forward_traced(ti, None)?;
    let mut d_logits = Array2::zeros(pred.logits.raw_dim());
    match model.config.task {
        Task::Sc => d_logits[[0, pred.argmax()[0]]] = 1.0,
        Task::Oe => d_logits.column_mut(Tag::B.class().expect("B is a class")).fill(1.0),
    }
    let d_inputs = model.backward(&trace, &d_logits)?;
    Ok(d_inputs.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
}

pub fn saliency<E: Encoder + Clone>(model: &AspectModel<E>, ti: &TransformedInput) -> Result<SaliencyMap> {
    let raw = saliency_raw(model, ti)?;
    let max = raw.iter().copied().fold(0.0, f64::max);
    let scores = if max > 0.0 { raw.iter().map(|v| v / max).collect() } else { raw };
    Ok(SaliencyMap { instance_id: ti.instance_id.clone(), subtokens: ti.subtokens.clone(), scores })
}
