//! Fine-tuning: shuffled mini-batches, AdamW, dev-based model selection with
//! early stopping, and seed-averaged experiments.

mod checkpoint;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advgen::{read_adversarial_jsonl, AdvInstance};
use crate::corpus::{
    load_oe_dataset, load_sc_dataset, split_dev_oe, split_dev_sc, Loaded, OeFormat, RawInstance, ScFormat, Task,
};
use crate::encoder::{register_markers, Backend, Encoder, SpecialTokens, TinyEncoder, TokenizerHandle};
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate, robustness_eval, Metrics, MetricsReport, Predictor, RobustnessReport, SeedMetrics,
};
use crate::model::{AspectModel, HeadConfig};
use crate::nn::{clip_grad_norm, AdamW, AdamWConfig};
use crate::transform::{align_oe_labels, apply, TransformConfig, TransformKind, TransformedInput};

pub use checkpoint::{Checkpoint, CHECKPOINT_FILE};
pub use config::{
    apply_overrides, DataFormat, DatasetConfig, ExperimentConfig, HeadSettings, OptimizerConfig, RunConfig,
    TokenizerSettings, TrainSettings,
};

/// Loads one file in the given format, checking it against `task`.
pub fn load_dataset(path: &Path, format: DataFormat, task: Task, domain: crate::corpus::Domain) -> Result<Loaded> {
    match (task, format) {
        (Task::Sc, DataFormat::Jsonl) => load_sc_dataset(path, ScFormat::Jsonl, domain),
        (Task::Sc, DataFormat::SemevalXml) => load_sc_dataset(path, ScFormat::SemevalXml, domain),
        (Task::Oe, DataFormat::Jsonl) => load_oe_dataset(path, OeFormat::Jsonl, domain),
        (Task::Oe, DataFormat::ToweTsv) => load_oe_dataset(path, OeFormat::ToweTsv, domain),
        (task, format) => Err(Error::Config(format!("format {format:?} carries no {task} labels"))),
    }
}

/// Train, dev, test and adversarial instances of one dataset.
#[derive(Clone, Debug, Default)]
pub struct Prepared {
    pub train: Vec<RawInstance>,
    pub dev: Vec<RawInstance>,
    pub test: Option<Vec<RawInstance>>,
    pub adversarial: Option<Vec<AdvInstance>>,
    pub rejections: BTreeMap<String, usize>,
}

pub fn prepare_data(ds: &DatasetConfig) -> Result<Prepared> {
    let mut rejections = BTreeMap::new();
    let mut load = |path: &Path| -> Result<Vec<RawInstance>> {
        let loaded = load_dataset(path, ds.format, ds.task, ds.domain)?;
        for (k, v) in loaded.rejection_counts() {
            *rejections.entry(k).or_insert(0) += v;
        }
        for w in &loaded.warnings {
            log::warn!("{}: {w}", path.display());
        }
        Ok(loaded.instances)
    };
    let full_train = load(&ds.train)?;
    let (train, dev) = match &ds.dev {
        Some(p) => (full_train, load(p)?),
        None => match ds.task {
            Task::Sc => split_dev_sc(&full_train, ds.dev_size, ds.split_seed)?,
            Task::Oe => split_dev_oe(&full_train, ds.dev_fraction, ds.split_seed)?,
        },
    };
    let test = ds.test.as_deref().map(&mut load).transpose()?;
    let adversarial = ds.adversarial.as_deref().map(read_adversarial_jsonl).transpose()?;
    if train.is_empty() {
        return Err(Error::Argument(format!("training set {} is empty", ds.train.display())));
    }
    Ok(Prepared { train, dev, test, adversarial, rejections })
}

/// WordPiece vocabulary from a file, or built from the training words and
/// the prompt. AM adds the marker tokens.
pub fn build_tokenizer(train: &[RawInstance], settings: &TrainSettings) -> Result<TokenizerHandle> {
    let t = &settings.tokenizer;
    match &t.vocab {
        Some(path) => TokenizerHandle::from_vocab_file(path, SpecialTokens::default(), t.lowercase),
        None => {
            let words = train
                .iter()
                .flat_map(|i| i.words.iter().map(String::as_str))
                .chain(settings.prompt.split_whitespace());
            TokenizerHandle::build_from_words(words, t.min_count.max(1), SpecialTokens::default(), t.lowercase)
        }
    }
}

/// Builds the encoder for the configured backend and the model on top,
/// registering markers when the transform needs them.
pub fn build_model(
    settings: &TrainSettings,
    task: Task,
    transform: TransformKind,
    tokenizer: &TokenizerHandle,
    seed: u64,
) -> Result<(AspectModel<TinyEncoder>, TokenizerHandle)> {
    let backend_seed = match &settings.backend {
        Backend::Tiny { seed } => *seed,
        Backend::Pretrained { model } => {
            return Err(Error::Unsupported(format!(
                "pretrained encoder {model:?}: no pretrained weights loader is compiled into this build"
            )))
        }
    };
    if settings.max_sequence_length > settings.tiny.max_positions {
        return Err(Error::Config(format!(
            "max_sequence_length {} exceeds the encoder's {} positions",
            settings.max_sequence_length, settings.tiny.max_positions
        )));
    }
    let mut encoder = TinyEncoder::new(backend_seed, tokenizer.vocab_size(), settings.tiny);
    let tokenizer = if transform == TransformKind::Am {
        register_markers(tokenizer, &mut encoder, backend_seed)?
    } else {
        tokenizer.clone()
    };
    let mut head = HeadConfig::new(task, encoder.hidden_width());
    head.sc_feature_mode = settings.head.sc_feature_mode;
    head.oe_feature_mode = settings.head.oe_feature_mode;
    head.mlp_hidden = settings.head.mlp_hidden.unwrap_or(encoder.hidden_width());
    head.dropout = settings.head.dropout;
    head.lambda_l2 = settings.head.lambda_l2;
    Ok((AspectModel::new(encoder, head, seed)?, tokenizer))
}

/// Per-row class targets: the polarity for classification, BIO classes
/// (IGNORE as `None`) for extraction.
pub fn gold_targets(task: Task, inst: &RawInstance, ti: &TransformedInput) -> Result<Vec<Option<usize>>> {
    match task {
        Task::Sc => {
            let p = inst
                .polarity
                .ok_or_else(|| Error::Argument(format!("instance {} has no polarity", inst.id)))?;
            Ok(vec![Some(p.index())])
        }
        Task::Oe => Ok(align_oe_labels(inst, ti)?.labels.iter().map(|t| t.class()).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Row-weighted mean training loss over the epoch.
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Epoch of the retained weights; 0 when no training happened.
    pub best_epoch: usize,
    pub dev: Option<Metrics>,
    pub test: Option<Metrics>,
    pub robustness: Option<RobustnessReport>,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
    /// Training instances dropped because truncation removed the aspect.
    pub skipped_train: usize,
}

impl SeedResult {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.train_loss).collect()
    }
}

fn predictor<'a>(
    model: &'a AspectModel<TinyEncoder>,
    tokenizer: &'a TokenizerHandle,
    transform: TransformKind,
    transform_config: &'a TransformConfig,
) -> Predictor<'a, TinyEncoder> {
    Predictor { model, tokenizer, transform, transform_config }
}

/// Trains one seed and evaluates the dev-selected weights.
pub fn train_one(cfg: &RunConfig, data: &Prepared, seed: u64) -> Result<(SeedResult, Checkpoint)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    let task = cfg.task();
    let settings = &cfg.train;
    let tcfg = settings.transform_config();
    let base_tok = build_tokenizer(&data.train, settings)?;
    let (mut model, tokenizer) = build_model(settings, task, cfg.transform, &base_tok, seed)?;

    let mut items: Vec<(TransformedInput, Vec<Option<usize>>)> = Vec::with_capacity(data.train.len());
    let mut skipped_train = 0;
    for inst in &data.train {
        match apply(cfg.transform, inst, &tokenizer, &tcfg) {
            Ok(ti) => {
                let gold = gold_targets(task, inst, &ti)?;
                if gold.iter().any(Option::is_some) {
                    items.push((ti, gold));
                } else {
                    skipped_train += 1;
                }
            }
            Err(Error::AspectTruncated { .. }) => skipped_train += 1,
            Err(e) => return Err(e),
        }
    }
    if items.is_empty() {
        return Err(Error::Argument("no trainable instances after transformation".into()));
    }

    let mut optimizer = AdamW::new(AdamWConfig {
        learning_rate: settings.learning_rate_for(task),
        beta1: settings.optimizer.beta1,
        beta2: settings.optimizer.beta2,
        eps: settings.optimizer.eps,
        weight_decay: settings.optimizer.weight_decay,
    });
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(1);
    let lambda = settings.head.lambda_l2;
    let agg = settings.oe_aggregation;
    let dev_score = |m: &AspectModel<TinyEncoder>| -> Result<Option<f64>> {
        if data.dev.is_empty() {
            return Ok(None);
        }
        let eval = evaluate(&predictor(m, &tokenizer, cfg.transform, &tcfg), &data.dev, agg)?;
        Ok(Some(eval.metrics.headline()))
    };

    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_metric = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut rows_total) = (0.0, 0usize);
        for (batch_id, batch) in order.chunks(settings.batch_size).enumerate() {
            let rows: usize = batch.iter().map(|&i| items[i].1.iter().flatten().count()).sum();
            model.zero_grad();
            let mut ce = 0.0;
            for &i in batch {
                let (ti, gold) = &items[i];
                ce += model.accumulate(ti, gold, 1.0 / rows as f64, &mut dropout_rng)?.0;
            }
            let loss = ce / rows as f64 + if lambda > 0.0 { lambda * model.l2_sum() } else { 0.0 };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_id, loss });
            }
            model.add_l2_grad(lambda);
            if let Some(c) = settings.optimizer.grad_clip {
                clip_grad_norm(model.params_mut(), c);
            }
            optimizer.step(model.params_mut());
            loss_sum += loss * rows as f64;
            rows_total += rows;
        }
        let dev_metric = dev_score(&model)?;
        history.push(EpochRecord { epoch, train_loss: loss_sum / rows_total as f64, dev_metric });
        match dev_metric {
            None => {
                best = model.clone();
                best_epoch = epoch;
            }
            Some(m) if m > best_metric => {
                best_metric = m;
                best = model.clone();
                best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if settings.patience.is_some_and(|p| stale >= p) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let p = predictor(&best, &tokenizer, cfg.transform, &tcfg);
    let dev = if data.dev.is_empty() { None } else { Some(evaluate(&p, &data.dev, agg)?.metrics) };
    let test = data.test.as_ref().map(|t| evaluate(&p, t, agg).map(|e| e.metrics)).transpose()?;
    let robustness = data
        .adversarial
        .as_ref()
        .map(|a| robustness_eval(&p, Some(cfg.dataset.domain), a, agg))
        .transpose()?;
    let ckpt = Checkpoint {
        run_id: cfg.run_id.clone(),
        seed,
        task,
        transform: cfg.transform,
        transform_config: tcfg.clone(),
        dataset: cfg.dataset.name.clone(),
        domain: cfg.dataset.domain,
        backend: settings.backend.clone(),
        epoch: best_epoch,
        dev_metric: dev.as_ref().map(Metrics::headline),
        tokenizer: tokenizer.clone(),
        model: best,
    };
    let checkpoint = match &settings.checkpoint_root {
        Some(root) => Some(ckpt.save(&Checkpoint::dir(root, &cfg.run_id, seed))?),
        None => None,
    };
    let result = SeedResult {
        seed,
        best_epoch,
        dev,
        test,
        robustness,
        history,
        stopped_early,
        checkpoint,
        skipped_train,
    };
    Ok((result, ckpt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub task: Task,
    pub transform: TransformKind,
    pub dataset: String,
    pub seeds: Vec<SeedResult>,
    pub failures: Vec<SeedFailure>,
    /// Some seed failed; the means cover the survivors only.
    pub partial: bool,
    pub mean_dev: Option<Metrics>,
    pub mean_test: Option<Metrics>,
    pub mean_robustness: Option<Metrics>,
    pub rejections: BTreeMap<String, usize>,
}

fn mean_of(items: Vec<Option<&Metrics>>) -> Option<Metrics> {
    let all: Option<Vec<Metrics>> = items.into_iter().map(|m| m.cloned()).collect();
    all.filter(|v| !v.is_empty()).and_then(|v| Metrics::mean(&v).ok())
}

impl RunResult {
    /// One report per split that every surviving seed scored.
    pub fn reports(&self) -> Vec<MetricsReport> {
        let mut out = Vec::new();
        let splits: [(&str, Option<&Metrics>, fn(&SeedResult) -> Option<&Metrics>); 3] = [
            ("dev", self.mean_dev.as_ref(), |s| s.dev.as_ref()),
            ("test", self.mean_test.as_ref(), |s| s.test.as_ref()),
            ("adversarial", self.mean_robustness.as_ref(), |s| s.robustness.as_ref().map(|r| &r.overall)),
        ];
        for (split, mean, get) in splits {
            let Some(mean) = mean else { continue };
            out.push(MetricsReport {
                run_id: self.run_id.clone(),
                task: self.task,
                transform: self.transform,
                dataset: self.dataset.clone(),
                split: split.to_string(),
                metrics: mean.clone(),
                per_seed: self
                    .seeds
                    .iter()
                    .filter_map(|s| get(s).map(|m| SeedMetrics { seed: s.seed, metrics: m.clone() }))
                    .collect(),
                n_unscoreable: mean.n_unscoreable,
            });
        }
        out
    }
}

/// Trains every seed on prepared data and averages the survivors.
pub fn run_with_data(cfg: &RunConfig, data: &Prepared) -> RunResult {
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.train.seeds {
        match train_one(cfg, data, seed) {
            Ok((r, _)) => seeds.push(r),
            Err(e) => {
                log::error!("run {} seed {seed} failed: {e}", cfg.run_id);
                failures.push(SeedFailure { seed, error: e.to_string() });
            }
        }
    }
    RunResult {
        run_id: cfg.run_id.clone(),
        task: cfg.task(),
        transform: cfg.transform,
        dataset: cfg.dataset.name.clone(),
        mean_dev: mean_of(seeds.iter().map(|s| s.dev.as_ref()).collect()),
        mean_test: mean_of(seeds.iter().map(|s| s.test.as_ref()).collect()),
        mean_robustness: mean_of(seeds.iter().map(|s| s.robustness.as_ref().map(|r| &r.overall)).collect()),
        partial: !failures.is_empty(),
        seeds,
        failures,
        rejections: data.rejections.clone(),
    }
}

/// Loads the data and runs every seed. Data or configuration problems fail
/// the whole run; a failing seed only marks it partial.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let data = prepare_data(&cfg.dataset)?;
    Ok(run_with_data(cfg, &data))
}

#[cfg(test)]
mod tests;
