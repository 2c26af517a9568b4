//! Dataset ingestion and the canonical instance schema.
//!
//! Every loader normalizes into [`RawInstance`]: one sentence, one aspect
//! span, and either a polarity (sentiment classification) or a list of gold
//! opinion spans (opinion extraction). Instance ids follow the convention
//! `<sentence key>#<k>`, so all aspects of one sentence share a key.

pub(crate) mod jsonl;
mod semeval;
mod split;
mod towe;
mod words;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use jsonl::{from_jsonl_str, read_jsonl, to_jsonl_string, write_jsonl, JsonRecord};
pub use semeval::parse_semeval_xml;
pub use split::{split_dev_oe, split_dev_sc};
pub use towe::parse_towe_tsv;
pub use words::{split_words, WordToken};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Neutral => 1,
            Polarity::Negative => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Polarity> {
        Polarity::ALL.get(i).copied()
    }

    /// Positive and negative swap; neutral has no reverse.
    pub fn reversed(self) -> Option<Polarity> {
        match self {
            Polarity::Positive => Some(Polarity::Negative),
            Polarity::Negative => Some(Polarity::Positive),
            Polarity::Neutral => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Positive),
            "neutral" | "neu" => Ok(Polarity::Neutral),
            "negative" | "neg" => Ok(Polarity::Negative),
            other => Err(Error::Argument(format!("unknown polarity {other:?}"))),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Laptop,
    Restaurant,
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laptop" | "lap" | "laptops" => Ok(Domain::Laptop),
            "restaurant" | "rest" | "res" | "restaurants" => Ok(Domain::Restaurant),
            other => Err(Error::Argument(format!("unknown domain {other:?}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Laptop => "laptop",
            Domain::Restaurant => "restaurant",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Standard,
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sc,
    Oe,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sc" => Ok(Task::Sc),
            "oe" => Ok(Task::Oe),
            other => Err(Error::Argument(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Sc => "sc",
            Task::Oe => "oe",
        })
    }
}

/// Inclusive word range `start..=end`. Serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

/// One sentence with one aspect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawInstance {
    pub id: String,
    pub words: Vec<String>,
    pub aspect: Span,
    pub aspect_text: String,
    pub polarity: Option<Polarity>,
    pub opinions: Option<Vec<Span>>,
    pub domain: Domain,
    pub origin: Origin,
}

impl RawInstance {
    /// Builds an instance, deriving `aspect_text` from the words.
    pub fn new(
        id: impl Into<String>,
        words: Vec<String>,
        aspect: Span,
        domain: Domain,
    ) -> Result<Self> {
        if aspect.start > aspect.end || aspect.end >= words.len() {
            return Err(Error::Argument(format!(
                "aspect span ({}, {}) outside a {}-word sentence",
                aspect.start,
                aspect.end,
                words.len()
            )));
        }
        let aspect_text = words[aspect.start..=aspect.end].join(" ");
        Ok(RawInstance {
            id: id.into(),
            words,
            aspect,
            aspect_text,
            polarity: None,
            opinions: None,
            domain,
            origin: Origin::Standard,
        })
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = Some(polarity);
        self
    }

    pub fn with_opinions(mut self, opinions: Vec<Span>) -> Self {
        self.opinions = Some(opinions);
        self
    }

    /// Key shared by every aspect of the same sentence: the id up to its last `#`.
    pub fn sentence_key(&self) -> &str {
        sentence_key(&self.id)
    }

    pub fn aspect_words(&self) -> &[String] {
        &self.words[self.aspect.start..=self.aspect.end]
    }

    pub fn span_text(&self, span: Span) -> String {
        self.words[span.start..=span.end].join(" ")
    }

    /// Checks the schema invariants that hold for every instance.
    pub fn validate(&self) -> std::result::Result<(), RejectReason> {
        let n = self.words.len();
        if n == 0 {
            return Err(RejectReason::Invalid("empty sentence".into()));
        }
        if self.words.iter().any(|w| w.is_empty() || w.chars().any(char::is_whitespace)) {
            return Err(RejectReason::Invalid("empty or whitespace-bearing word".into()));
        }
        if self.aspect.start > self.aspect.end || self.aspect.end >= n {
            return Err(RejectReason::SpanOutOfRange);
        }
        if self.words[self.aspect.start..=self.aspect.end].join(" ") != self.aspect_text {
            return Err(RejectReason::Invalid(format!(
                "aspect text {:?} does not match its words",
                self.aspect_text
            )));
        }
        if let Some(spans) = &self.opinions {
            validate_spans(spans, n)?;
        }
        Ok(())
    }

    /// Schema invariants plus the task-specific requirement: a polarity for
    /// classification, at least one opinion span for extraction.
    pub fn validate_for(&self, task: Task) -> std::result::Result<(), RejectReason> {
        self.validate()?;
        match task {
            Task::Sc if self.polarity.is_none() => {
                Err(RejectReason::Invalid("missing polarity".into()))
            }
            Task::Oe if self.opinions.as_ref().is_none_or(|o| o.is_empty()) => {
                Err(RejectReason::NoOpinion)
            }
            _ => Ok(()),
        }
    }
}

pub fn sentence_key(id: &str) -> &str {
    id.rsplit_once('#').map_or(id, |(k, _)| k)
}

/// Spans must lie in the sentence, be sorted by start and never overlap.
pub fn validate_spans(spans: &[Span], n_words: usize) -> std::result::Result<(), RejectReason> {
    for s in spans {
        if s.start > s.end || s.end >= n_words {
            return Err(RejectReason::SpanOutOfRange);
        }
    }
    for pair in spans.windows(2) {
        if pair[0].start > pair[1].start {
            return Err(RejectReason::Invalid("opinion spans not sorted".into()));
        }
        if pair[0].overlaps(&pair[1]) {
            return Err(RejectReason::OverlappingOpinions);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ConflictPolarity,
    AspectNotFound,
    OverlappingOpinions,
    SpanOutOfRange,
    NoOpinion,
    Invalid(String),
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::ConflictPolarity => "conflict_polarity",
            RejectReason::AspectNotFound => "aspect_not_found",
            RejectReason::OverlappingOpinions => "overlapping_opinions",
            RejectReason::SpanOutOfRange => "span_out_of_range",
            RejectReason::NoOpinion => "no_opinion",
            RejectReason::Invalid(_) => "invalid",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Invalid(msg) => write!(f, "invalid: {msg}"),
            other => f.write_str(other.label()),
        }
    }
}

/// An input record the loader refused, kept so count discrepancies stay visible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub instance_id: String,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, Default)]
pub struct Loaded {
    pub instances: Vec<RawInstance>,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

impl Loaded {
    pub(crate) fn reject(&mut self, instance_id: impl Into<String>, reason: RejectReason) {
        self.rejections.push(Rejection {
            instance_id: instance_id.into(),
            reason,
        });
    }

    /// Keeps `inst` if it validates for `task`, records a rejection otherwise.
    pub(crate) fn admit(&mut self, inst: RawInstance, task: Task) {
        match inst.validate_for(task) {
            Ok(()) => self.instances.push(inst),
            Err(reason) => self.reject(inst.id, reason),
        }
    }

    pub fn rejection_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejections {
            *counts.entry(r.reason.label().to_string()).or_default() += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScFormat {
    SemevalXml,
    Jsonl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OeFormat {
    ToweTsv,
    Jsonl,
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a sentiment-classification dataset. `domain` is used for formats
/// that do not carry one.
pub fn load_sc_dataset(path: &Path, format: ScFormat, domain: Domain) -> Result<Loaded> {
    let text = read_to_string(path)?;
    match format {
        ScFormat::SemevalXml => parse_semeval_xml(&text, domain),
        ScFormat::Jsonl => jsonl::load_jsonl_str(&text, Task::Sc),
    }
}

/// Loads an opinion-extraction dataset.
pub fn load_oe_dataset(path: &Path, format: OeFormat, domain: Domain) -> Result<Loaded> {
    let text = read_to_string(path)?;
    match format {
        OeFormat::ToweTsv => parse_towe_tsv(&text, domain),
        OeFormat::Jsonl => jsonl::load_jsonl_str(&text, Task::Oe),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_sentences: usize,
    pub n_aspects: usize,
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

impl DatasetStats {
    pub fn polarity_counts(&self) -> [usize; 3] {
        [self.positive, self.neutral, self.negative]
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sentences={} aspects={} positive={} neutral={} negative={}",
            self.n_sentences, self.n_aspects, self.positive, self.neutral, self.negative
        )
    }
}

pub fn compute_stats(instances: &[RawInstance]) -> DatasetStats {
    let sentences: HashSet<&str> = instances.iter().map(|i| i.sentence_key()).collect();
    let mut stats = DatasetStats {
        n_sentences: sentences.len(),
        n_aspects: instances.len(),
        ..Default::default()
    };
    for p in instances.iter().filter_map(|i| i.polarity) {
        match p {
            Polarity::Positive => stats.positive += 1,
            Polarity::Neutral => stats.neutral += 1,
            Polarity::Negative => stats.negative += 1,
        }
    }
    stats
}

/// Groups instances by sentence key, keeping first-appearance order.
pub fn group_by_sentence(instances: &[RawInstance]) -> Vec<Vec<&RawInstance>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&RawInstance>> = Default::default();
    for inst in instances {
        let key = inst.sentence_key();
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(inst);
    }
    order.into_iter().map(|k| groups.remove(k).unwrap()).collect()
}
