//! Run and experiment configuration, read from TOML with optional dotted
//! `key=value` overrides. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Domain, Task};
use crate::encoder::{Backend, TinyConfig};
use crate::error::{Error, Result};
use crate::evaluator::OeAggregation;
use crate::model::{OeFeatureMode, ScFeatureMode};
use crate::transform::{TransformConfig, TransformKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    #[default]
    Jsonl,
    SemevalXml,
    ToweTsv,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "semeval-xml" => Ok(DataFormat::SemevalXml),
            "towe-tsv" => Ok(DataFormat::ToweTsv),
            _ => Err(Error::Argument(format!("unknown format {s:?} (jsonl, semeval-xml, towe-tsv)"))),
        }
    }
}

fn default_dev_size() -> usize {
    150
}

fn default_dev_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub task: Task,
    pub domain: Domain,
    #[serde(default)]
    pub format: DataFormat,
    pub train: PathBuf,
    /// Explicit dev file; without one the dev split is carved from `train`.
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Adversarial JSONL scored as the robustness split.
    #[serde(default)]
    pub adversarial: Option<PathBuf>,
    /// Dev instances held out for classification.
    #[serde(default = "default_dev_size")]
    pub dev_size: usize,
    /// Share of sentences held out for extraction.
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

impl DatasetConfig {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train);
        for p in [&mut self.dev, &mut self.test, &mut self.adversarial].into_iter().flatten() {
            fix(p);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm bound; off when absent.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, grad_clip: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSettings {
    pub sc_feature_mode: ScFeatureMode,
    pub oe_feature_mode: OeFeatureMode,
    /// Hidden width of the MLP; the encoder width when absent.
    pub mlp_hidden: Option<usize>,
    pub dropout: f64,
    pub lambda_l2: f64,
}

impl Default for HeadSettings {
    fn default() -> Self {
        HeadSettings {
            sc_feature_mode: ScFeatureMode::MeanPool,
            oe_feature_mode: OeFeatureMode::Concat,
            mlp_hidden: None,
            dropout: 0.1,
            lambda_l2: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerSettings {
    /// WordPiece vocabulary file; built from the training words when absent.
    pub vocab: Option<PathBuf>,
    pub min_count: usize,
    pub lowercase: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub backend: Backend,
    /// Defaults to 1e-5 for classification and 5e-5 for extraction.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_sequence_length: usize,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping; never stops when absent.
    pub patience: Option<usize>,
    pub seeds: Vec<u64>,
    pub optimizer: OptimizerConfig,
    pub head: HeadSettings,
    pub tiny: TinyConfig,
    pub prompt: String,
    pub tokenizer: TokenizerSettings,
    pub oe_aggregation: OeAggregation,
    /// Root of `checkpoints/<run-id>/<seed>/best`; nothing is written when absent.
    pub checkpoint_root: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            backend: Backend::Tiny { seed: 0 },
            learning_rate: None,
            batch_size: 64,
            max_sequence_length: 128,
            epochs: 5,
            patience: Some(2),
            seeds: vec![1, 2, 3, 4, 5],
            optimizer: OptimizerConfig::default(),
            head: HeadSettings::default(),
            tiny: TinyConfig::default(),
            prompt: TransformConfig::default().prompt,
            tokenizer: TokenizerSettings { min_count: 1, ..Default::default() },
            oe_aggregation: OeAggregation::Micro,
            checkpoint_root: None,
        }
    }
}

impl TrainSettings {
    pub fn learning_rate_for(&self, task: Task) -> f64 {
        self.learning_rate.unwrap_or(match task {
            Task::Sc => 1e-5,
            Task::Oe => 5e-5,
        })
    }

    pub fn transform_config(&self) -> TransformConfig {
        TransformConfig { max_sequence_length: self.max_sequence_length, prompt: self.prompt.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning_rate {lr} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.max_sequence_length < 3 {
            return Err(Error::Config("max_sequence_length must be at least 3".into()));
        }
        if let Some(c) = self.optimizer.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// One (transform, dataset) cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub transform: TransformKind,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainSettings,
}

impl RunConfig {
    pub fn task(&self) -> Task {
        self.dataset.task
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.dataset.dev_fraction) {
            return Err(Error::Config(format!("dev_fraction {} outside [0, 1)", self.dataset.dev_fraction)));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::Config(format!("run id {:?} must be a non-empty path component", self.run_id)));
        }
        Ok(())
    }
}

/// A grid of transforms × datasets sharing one set of training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub transforms: Vec<TransformKind>,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub train: TrainSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {}", e.message())))?;
        apply_overrides(&mut value, overrides)?;
        let cfg: ExperimentConfig =
            value.try_into().map_err(|e: toml::de::Error| Error::Config(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            d.resolve(base);
        }
        for p in [&mut cfg.train.tokenizer.vocab, &mut cfg.train.checkpoint_root].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() || self.datasets.is_empty() {
            return Err(Error::Config("an experiment needs at least one transform and one dataset".into()));
        }
        self.runs().iter().try_for_each(RunConfig::validate)
    }

    /// Expands the grid, datasets outermost.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for d in &self.datasets {
            for &t in &self.transforms {
                out.push(RunConfig {
                    run_id: format!("{}-{}-{}-{}", self.name, d.name, d.task, t.label().to_lowercase()),
                    transform: t,
                    dataset: d.clone(),
                    train: self.train.clone(),
                });
            }
        }
        out
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` overrides. Numeric path segments index arrays;
/// missing tables are created, so misspelt keys surface as unknown-key
/// errors during deserialization.
pub fn apply_overrides(root: &mut toml::Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(Error::Config(format!("override key {path:?} is malformed")));
        }
        let mut cur = &mut *root;
        for (i, key) in keys.iter().enumerate() {
            let last = i + 1 == keys.len();
            cur = match cur {
                toml::Value::Table(t) => {
                    if last {
                        t.insert(key.to_string(), parse_override_value(raw.trim()));
                        break;
                    }
                    t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(Default::default()))
                }
                toml::Value::Array(a) => {
                    let idx: usize = key
                        .parse()
                        .map_err(|_| Error::Config(format!("override {path:?}: {key:?} is not an array index")))?;
                    let len = a.len();
                    let slot = a
                        .get_mut(idx)
                        .ok_or_else(|| Error::Config(format!("override {path:?}: index {idx} out of {len}")))?;
                    if last {
                        *slot = parse_override_value(raw.trim());
                        break;
                    }
                    slot
                }
                _ => return Err(Error::Config(format!("override {path:?}: {key:?} is inside a scalar"))),
            };
        }
    }
    Ok(())
}
