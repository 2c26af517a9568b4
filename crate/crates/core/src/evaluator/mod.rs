//! Accuracy / macro-F1 for classification, exact-match span F1 for opinion
//! extraction, evaluation of adversarial sets, and gradient saliency.

mod report;
mod saliency;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::advgen::{AdvInstance, Strategy};
use crate::corpus::{Domain, Origin, Polarity, RawInstance, Span, Task};
use crate::encoder::{Encoder, TokenizerHandle};
use crate::error::{Error, Result};
use crate::model::AspectModel;
use crate::transform::{align_oe_labels, apply, project_predictions, Tag, TransformConfig, TransformKind, TransformedInput};

pub use report::{render_heatmap_text, render_seed_table, render_table, MetricsReport, SeedMetrics};
pub use saliency::{saliency, SaliencyMap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScores {
    fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (precision, recall) = (ratio(matched, predicted), ratio(matched, gold));
        ClassScores { precision, recall, f1: f1(precision, recall) }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Evaluation scores. Classification fills `accuracy`, `macro_f1` and
/// `per_class`; extraction fills `precision`, `recall` and `f1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<Polarity, ClassScores>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub n_evaluated: usize,
    pub n_unscoreable: usize,
}

impl Metrics {
    /// The model-selection metric: macro-F1 for classification, span F1 for
    /// extraction.
    pub fn headline(&self) -> f64 {
        match self.task {
            Task::Sc => self.macro_f1.unwrap_or(0.0),
            Task::Oe => self.f1.unwrap_or(0.0),
        }
    }

    /// Field-wise arithmetic mean. All entries must share a task.
    pub fn mean(all: &[Metrics]) -> Result<Metrics> {
        let first = all.first().ok_or_else(|| Error::Argument("no metrics to average".into()))?;
        if all.iter().any(|m| m.task != first.task) {
            return Err(Error::Argument("cannot average metrics of different tasks".into()));
        }
        let n = all.len() as f64;
        let avg = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Option<f64> {
            all.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
        };
        let per_class = first.per_class.as_ref().map(|pc| {
            pc.keys()
                .map(|&c| {
                    let get = |m: &Metrics| m.per_class.as_ref().and_then(|p| p.get(&c)).copied().unwrap_or_default();
                    let s = ClassScores {
                        precision: all.iter().map(|m| get(m).precision).sum::<f64>() / n,
                        recall: all.iter().map(|m| get(m).recall).sum::<f64>() / n,
                        f1: all.iter().map(|m| get(m).f1).sum::<f64>() / n,
                    };
                    (c, s)
                })
                .collect()
        });
        Ok(Metrics {
            task: first.task,
            accuracy: avg(&|m| m.accuracy),
            macro_f1: avg(&|m| m.macro_f1),
            per_class,
            precision: avg(&|m| m.precision),
            recall: avg(&|m| m.recall),
            f1: avg(&|m| m.f1),
            n_evaluated: first.n_evaluated,
            n_unscoreable: first.n_unscoreable,
        })
    }
}

/// Accuracy and macro-F1 over the three polarity classes.
pub fn sc_metrics(preds: &[Polarity], golds: &[Polarity]) -> Result<Metrics> {
    let preds: Vec<_> = preds.iter().copied().map(Some).collect();
    sc_metrics_with_misses(&preds, golds)
}

/// As [`sc_metrics`], where `None` marks an instance the model could not
/// score; it counts as wrong.
pub fn sc_metrics_with_misses(preds: &[Option<Polarity>], golds: &[Polarity]) -> Result<Metrics> {
    if preds.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Argument("no instances to score".into()));
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| **p == Some(**g)).count();
    let per_class: BTreeMap<Polarity, ClassScores> = Polarity::ALL
        .iter()
        .map(|&c| {
            let matched = preds.iter().zip(golds).filter(|(p, g)| **p == Some(c) && **g == c).count();
            let predicted = preds.iter().filter(|p| **p == Some(c)).count();
            let gold = golds.iter().filter(|g| **g == c).count();
            (c, ClassScores::from_counts(matched, predicted, gold))
        })
        .collect();
    let macro_f1 = per_class.values().map(|s| s.f1).sum::<f64>() / Polarity::ALL.len() as f64;
    Ok(Metrics {
        task: Task::Sc,
        accuracy: Some(correct as f64 / golds.len() as f64),
        macro_f1: Some(macro_f1),
        per_class: Some(per_class),
        precision: None,
        recall: None,
        f1: None,
        n_evaluated: golds.len(),
        n_unscoreable: preds.iter().filter(|p| p.is_none()).count(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OeAggregation {
    /// Pool matches over all spans.
    #[default]
    Micro,
    /// Average per-instance precision, recall and F1.
    Macro,
}

/// Exact-match span scores; a span matches only with identical boundaries.
pub fn oe_span_f1(preds: &[Vec<Span>], golds: &[Vec<Span>]) -> Result<Metrics> {
    oe_span_scores(preds, golds, OeAggregation::Micro)
}

pub fn oe_span_scores(preds: &[Vec<Span>], golds: &[Vec<Span>], aggregation: OeAggregation) -> Result<Metrics> {
    if preds.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} prediction lists for {} gold lists",
            preds.len(),
            golds.len()
        )));
    }
    let counts: Vec<(usize, usize, usize)> = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| {
            let p: BTreeSet<_> = p.iter().copied().collect();
            let g: BTreeSet<_> = g.iter().copied().collect();
            (p.intersection(&g).count(), p.len(), g.len())
        })
        .collect();
    let scores = match aggregation {
        OeAggregation::Micro => {
            let (m, p, g) = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            ClassScores::from_counts(m, p, g)
        }
        OeAggregation::Macro if counts.is_empty() => ClassScores::default(),
        OeAggregation::Macro => {
            let n = counts.len() as f64;
            let each: Vec<_> = counts.iter().map(|&(m, p, g)| ClassScores::from_counts(m, p, g)).collect();
            ClassScores {
                precision: each.iter().map(|s| s.precision).sum::<f64>() / n,
                recall: each.iter().map(|s| s.recall).sum::<f64>() / n,
                f1: each.iter().map(|s| s.f1).sum::<f64>() / n,
            }
        }
    };
    Ok(Metrics {
        task: Task::Oe,
        accuracy: None,
        macro_f1: None,
        per_class: None,
        precision: Some(scores.precision),
        recall: Some(scores.recall),
        f1: Some(scores.f1),
        n_evaluated: preds.len(),
        n_unscoreable: 0,
    })
}

/// Everything needed to run a trained model on raw instances.
pub struct Predictor<'a, E> {
    pub model: &'a AspectModel<E>,
    pub tokenizer: &'a TokenizerHandle,
    pub transform: TransformKind,
    pub transform_config: &'a TransformConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<Span>>,
    /// Truncation removed the aspect or part of a gold span.
    pub unscoreable: bool,
}

impl<E: Encoder> Predictor<'_, E> {
    pub fn task(&self) -> Task {
        self.model.config.task
    }

    pub fn transform(&self, inst: &RawInstance) -> Result<TransformedInput> {
        apply(self.transform, inst, self.tokenizer, self.transform_config)
    }

    pub fn predict(&self, inst: &RawInstance) -> Result<InstancePrediction> {
        let task = self.task();
        let ti = match self.transform(inst) {
            Ok(ti) => ti,
            Err(Error::AspectTruncated { .. }) => {
                return Ok(InstancePrediction {
                    id: inst.id.clone(),
                    polarity: None,
                    spans: (task == Task::Oe).then(Vec::new),
                    unscoreable: true,
                })
            }
            Err(e) => return Err(e),
        };
        let pred = self.model.predict(&ti)?;
        let classes = pred.argmax();
        Ok(match task {
            Task::Sc => InstancePrediction {
                id: inst.id.clone(),
                polarity: Polarity::from_index(classes[0]),
                spans: None,
                unscoreable: false,
            },
            Task::Oe => {
                let tags: Vec<Tag> = classes.into_iter().map(Tag::from_class).collect();
                let unscoreable = inst.opinions.is_some() && align_oe_labels(inst, &ti)?.unscoreable;
                InstancePrediction {
                    id: inst.id.clone(),
                    polarity: None,
                    spans: Some(project_predictions(&ti, &tags)),
                    unscoreable,
                }
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<InstancePrediction>,
}

/// Scores `instances` with the predictor. Instances lacking labels for the
/// model's task are refused.
pub fn evaluate<E: Encoder>(
    p: &Predictor<'_, E>,
    instances: &[RawInstance],
    aggregation: OeAggregation,
) -> Result<Evaluation> {
    let task = p.task();
    if let Some(bad) = instances.iter().find(|i| i.validate_for(task).is_err()) {
        return Err(Error::Refused(format!(
            "instance {} carries no {} labels; the checkpoint was trained for {}",
            bad.id,
            if task == Task::Sc { "polarity" } else { "opinion span" },
            task
        )));
    }
    let predictions = instances.iter().map(|i| p.predict(i)).collect::<Result<Vec<_>>>()?;
    let metrics = score(task, instances, &predictions, aggregation)?;
    Ok(Evaluation { metrics, predictions })
}

fn score(task: Task, instances: &[RawInstance], predictions: &[InstancePrediction], aggregation: OeAggregation) -> Result<Metrics> {
    let unscoreable = predictions.iter().filter(|p| p.unscoreable).count();
    let mut metrics = match task {
        Task::Sc => {
            let golds: Vec<Polarity> = instances.iter().map(|i| i.polarity.expect("validated")).collect();
            let preds: Vec<_> = predictions.iter().map(|p| p.polarity).collect();
            sc_metrics_with_misses(&preds, &golds)?
        }
        Task::Oe => {
            let golds: Vec<Vec<Span>> = instances.iter().map(|i| i.opinions.clone().unwrap_or_default()).collect();
            let preds: Vec<Vec<Span>> = predictions.iter().map(|p| p.spans.clone().unwrap_or_default()).collect();
            oe_span_scores(&preds, &golds, aggregation)?
        }
    };
    metrics.n_unscoreable = unscoreable;
    Ok(metrics)
}

fn correct(task: Task, inst: &RawInstance, pred: &InstancePrediction) -> bool {
    match task {
        Task::Sc => pred.polarity.is_some() && pred.polarity == inst.polarity,
        Task::Oe => {
            let set = |s: &[Span]| s.iter().copied().collect::<BTreeSet<_>>();
            set(pred.spans.as_deref().unwrap_or_default()) == set(inst.opinions.as_deref().unwrap_or_default())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Scores over every target instance, SOURCE copies included.
    pub overall: Metrics,
    pub per_strategy: BTreeMap<Strategy, Metrics>,
    /// Share of source instances whose every variant is handled correctly.
    pub aspect_robustness: f64,
}

/// Evaluates a model trained on standard data on an adversarial set. Only
/// the target instance of each variant is scored.
pub fn robustness_eval<E: Encoder>(
    p: &Predictor<'_, E>,
    model_domain: Option<Domain>,
    adversarial: &[AdvInstance],
    aggregation: OeAggregation,
) -> Result<RobustnessReport> {
    if let Some(a) = adversarial.iter().find(|a| a.instance.origin != Origin::Adversarial) {
        return Err(Error::Refused(format!(
            "instance {} has origin standard; robustness evaluation needs an adversarial set",
            a.instance.id
        )));
    }
    if let Some(d) = model_domain {
        if let Some(a) = adversarial.iter().find(|a| a.instance.domain != d) {
            return Err(Error::Refused(format!(
                "model trained on {d} data cannot be scored on {} instance {}",
                a.instance.domain, a.instance.id
            )));
        }
    }
    let targets: Vec<&AdvInstance> = adversarial.iter().filter(|a| a.is_target()).collect();
    let instances: Vec<RawInstance> = targets.iter().map(|a| a.instance.clone()).collect();
    let eval = evaluate(p, &instances, aggregation)?;
    let task = p.task();

    let mut per_strategy = BTreeMap::new();
    for s in Strategy::ALL {
        let idx: Vec<usize> = (0..targets.len()).filter(|&i| targets[i].strategy == s).collect();
        if idx.is_empty() {
            continue;
        }
        let insts: Vec<RawInstance> = idx.iter().map(|&i| instances[i].clone()).collect();
        let preds: Vec<InstancePrediction> = idx.iter().map(|&i| eval.predictions[i].clone()).collect();
        per_strategy.insert(s, score(task, &insts, &preds, aggregation)?);
    }

    let mut by_parent: BTreeMap<&str, bool> = BTreeMap::new();
    for (i, a) in targets.iter().enumerate() {
        let ok = correct(task, &instances[i], &eval.predictions[i]);
        *by_parent.entry(a.parent_id.as_str()).or_insert(true) &= ok;
    }
    let aspect_robustness = if by_parent.is_empty() {
        0.0
    } else {
        by_parent.values().filter(|v| **v).count() as f64 / by_parent.len() as f64
    };
    Ok(RobustnessReport { overall: eval.metrics, per_strategy, aspect_robustness })
}
