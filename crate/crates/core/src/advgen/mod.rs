//! Adversarial test-set generation: reverse the target's opinion (REVTGT),
//! reverse same-sentiment non-targets (REVNON), or append opposite-sentiment
//! distractor clauses (ADDDIFF).
//!
//! Every variant sentence is emitted as one instance per annotated aspect.
//! Instance ids are `<parent>~<STRATEGY>#<k>`; `k = 0` is the aspect the
//! variant was built for. SOURCE copies keep one record per original aspect.

mod edit;
mod lexicon;
mod pool;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::jsonl::{parse_records, JsonRecord};
use crate::corpus::{group_by_sentence, Origin, Polarity, RawInstance, Span};
use crate::error::{Error, Result};
use edit::{Annotation, Draft};

pub use lexicon::{Lexicon, LexiconEntry};
pub use pool::{build_distractor_pool, DistractorEntry, DistractorPool};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Source,
    RevTgt,
    RevNon,
    AddDiff,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Source, Strategy::RevTgt, Strategy::RevNon, Strategy::AddDiff];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Source => "SOURCE",
            Strategy::RevTgt => "REVTGT",
            Strategy::RevNon => "REVNON",
            Strategy::AddDiff => "ADDDIFF",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    NeutralTarget,
    UnknownPolarity,
    NoEditableOpinion,
    NoSameSentimentNonTarget,
    InconsistentSentence,
    UnknownTarget,
}

impl SkipReason {
    pub fn label(self) -> &'static str {
        match self {
            SkipReason::NeutralTarget => "neutral_target",
            SkipReason::UnknownPolarity => "unknown_polarity",
            SkipReason::NoEditableOpinion => "no_editable_opinion",
            SkipReason::NoSameSentimentNonTarget => "no_same_sentiment_non_target",
            SkipReason::InconsistentSentence => "inconsistent_sentence",
            SkipReason::UnknownTarget => "unknown_target",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One emitted adversarial record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdvInstance {
    pub instance: RawInstance,
    pub strategy: Strategy,
    pub parent_id: String,
}

impl AdvInstance {
    /// True for the aspect a variant was built for, and for every SOURCE copy.
    pub fn is_target(&self) -> bool {
        self.strategy == Strategy::Source || self.instance.id.ends_with("#0")
    }
}

impl From<&AdvInstance> for JsonRecord {
    fn from(a: &AdvInstance) -> Self {
        let mut rec = JsonRecord::from(&a.instance);
        rec.strategy = Some(a.strategy);
        rec.parent_id = Some(a.parent_id.clone());
        rec
    }
}

/// A generated sentence: the target annotation plus every other aspect.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvVariant {
    pub strategy: Strategy,
    pub parent_id: String,
    pub target: RawInstance,
    pub others: Vec<RawInstance>,
    /// Distractors requested but unavailable (ADDDIFF only).
    pub shortfall: usize,
}

impl AdvVariant {
    pub fn sentence(&self) -> String {
        self.target.words.join(" ")
    }

    pub fn into_instances(self) -> Vec<AdvInstance> {
        let (strategy, parent_id) = (self.strategy, self.parent_id);
        std::iter::once(self.target)
            .chain(self.others)
            .map(|instance| AdvInstance { instance, strategy, parent_id: parent_id.clone() })
            .collect()
    }
}

/// Connectives used when appending distractor clauses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClauseTemplates {
    /// Replaces the sentence-final punctuation before the first clause.
    pub joiner: String,
    pub first_connective: String,
    pub next_connective: String,
    pub terminal: String,
}

impl Default for ClauseTemplates {
    fn default() -> Self {
        ClauseTemplates {
            joiner: ",".into(),
            first_connective: "but".into(),
            next_connective: "And".into(),
            terminal: ".".into(),
        }
    }
}

fn target_index(group: &[&RawInstance], target: &str) -> std::result::Result<usize, SkipReason> {
    group.iter().position(|i| i.id == target).ok_or(SkipReason::UnknownTarget)
}

fn finish(draft: Draft, group: &[&RawInstance], t: usize, strategy: Strategy, shortfall: usize) -> AdvVariant {
    let parent = &group[t];
    let make = |k: usize, ann: &Annotation| RawInstance {
        id: format!("{}~{}#{k}", parent.id, strategy),
        words: draft.words.clone(),
        aspect: ann.aspect,
        aspect_text: draft.words[ann.aspect.start..=ann.aspect.end].join(" "),
        polarity: ann.polarity,
        opinions: ann.annotated.then(|| ann.opinions.clone()),
        domain: parent.domain,
        origin: Origin::Adversarial,
    };
    let target = make(0, &draft.annots[t]);
    let others = draft
        .annots
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != t)
        .enumerate()
        .map(|(k, (_, ann))| make(k + 1, ann))
        .collect();
    AdvVariant { strategy, parent_id: parent.id.clone(), target, others, shortfall }
}

fn flip_links(draft: &mut Draft, edited: &[usize], former: &[Option<Polarity>], lex: &Lexicon) {
    for &e in edited {
        for u in 0..draft.annots.len() {
            if edited.contains(&u) || former[e].is_none() || former[u] != former[e] {
                continue;
            }
            draft.flip_conjunction_between(e, u, lex);
        }
    }
}

/// Reverses the target aspect's opinion words.
pub fn rev_tgt(group: &[&RawInstance], target: &str, lex: &Lexicon) -> std::result::Result<AdvVariant, SkipReason> {
    let t = target_index(group, target)?;
    let mut draft = Draft::from_group(group).ok_or(SkipReason::InconsistentSentence)?;
    if draft.annots[t].polarity == Some(Polarity::Neutral) {
        return Err(SkipReason::NeutralTarget);
    }
    if !draft.ensure_opinions(t, lex) {
        return Err(SkipReason::NoEditableOpinion);
    }
    let former: Vec<_> = (0..draft.annots.len()).map(|a| draft.polarity_of(a, lex)).collect();
    let mut edited = vec![t];
    edited.extend((0..draft.annots.len()).filter(|&u| u != t && draft.opinions_overlap(t, u)));
    draft.reverse_opinions(t, lex);
    for &e in &edited {
        let ann = &mut draft.annots[e];
        ann.polarity = ann.polarity.map(|p| p.reversed().unwrap_or(p));
    }
    flip_links(&mut draft, &edited, &former, lex);
    Ok(finish(draft, group, t, Strategy::RevTgt, 0))
}

/// Reverses every non-target aspect sharing the target's sentiment, leaving
/// the target's words untouched.
pub fn rev_non(group: &[&RawInstance], target: &str, lex: &Lexicon) -> std::result::Result<AdvVariant, SkipReason> {
    let t = target_index(group, target)?;
    let mut draft = Draft::from_group(group).ok_or(SkipReason::InconsistentSentence)?;
    let want = match draft.polarity_of(t, lex) {
        None => return Err(SkipReason::UnknownPolarity),
        Some(Polarity::Neutral) => return Err(SkipReason::NeutralTarget),
        Some(p) => p,
    };
    let former: Vec<_> = (0..draft.annots.len()).map(|a| draft.polarity_of(a, lex)).collect();
    let candidates: Vec<usize> = (0..draft.annots.len()).filter(|&u| u != t && former[u] == Some(want)).collect();
    if candidates.is_empty() {
        return Err(SkipReason::NoSameSentimentNonTarget);
    }
    let mut edited = Vec::new();
    for u in candidates {
        if !draft.ensure_opinions(u, lex) {
            continue;
        }
        let clashes = (0..draft.annots.len()).any(|o| o != u && draft.opinions_overlap(u, o))
            || draft.opinions_overlap(t, u);
        if clashes {
            continue;
        }
        edited.push(u);
    }
    if edited.is_empty() {
        return Err(SkipReason::NoEditableOpinion);
    }
    for &u in &edited {
        draft.reverse_opinions(u, lex);
        let ann = &mut draft.annots[u];
        ann.polarity = ann.polarity.map(|p| p.reversed().unwrap_or(p));
    }
    flip_links(&mut draft, &edited, &former, lex);
    Ok(finish(draft, group, t, Strategy::RevNon, 0))
}

/// Appends up to `k` pool clauses whose sentiment opposes the target's.
/// A pool too small for `k` yields fewer clauses and records the shortfall.
pub fn add_diff(
    group: &[&RawInstance],
    target: &str,
    pool: &DistractorPool,
    k: usize,
    templates: &ClauseTemplates,
    lex: &Lexicon,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<AdvVariant, SkipReason> {
    let t = target_index(group, target)?;
    let mut draft = Draft::from_group(group).ok_or(SkipReason::InconsistentSentence)?;
    let opposite = match draft.polarity_of(t, lex) {
        None => return Err(SkipReason::UnknownPolarity),
        Some(p) => p.reversed().ok_or(SkipReason::NeutralTarget)?,
    };
    let taken: Vec<String> = group.iter().map(|i| i.aspect_text.to_lowercase()).collect();
    let eligible: Vec<&DistractorEntry> = pool
        .entries
        .iter()
        .filter(|e| e.polarity == opposite && !taken.contains(&e.aspect_text.to_lowercase()))
        .collect();
    let n = k.min(eligible.len());
    let mut picks = sample(rng, eligible.len(), n).into_vec();
    picks.sort_unstable();
    if n > 0 {
        let last = draft.words.len() - 1;
        if matches!(draft.words[last].as_str(), "." | "!" | "?") {
            draft.words[last] = templates.joiner.clone();
        } else {
            draft.words.push(templates.joiner.clone());
        }
    }
    let src = &draft.annots[t];
    let (with_polarity, with_opinions) = (src.polarity.is_some(), src.annotated);
    for (j, &p) in picks.iter().enumerate() {
        let entry = eligible[p];
        let connective = if j == 0 { &templates.first_connective } else { &templates.next_connective };
        draft.words.push(connective.clone());
        let off = draft.words.len();
        draft.words.extend(entry.clause.iter().cloned());
        draft.words.push(templates.terminal.clone());
        let shift = |s: Span| Span::new(s.start + off, s.end + off);
        draft.annots.push(Annotation {
            aspect: shift(entry.aspect),
            opinions: if with_opinions { entry.opinions.iter().copied().map(shift).collect() } else { Vec::new() },
            annotated: with_opinions,
            polarity: with_polarity.then_some(entry.polarity),
        });
    }
    Ok(finish(draft, group, t, Strategy::AddDiff, k - n))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed: u64,
    /// Distractor clauses per ADDDIFF variant.
    pub k: usize,
    pub templates: ClauseTemplates,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { seed: 0, k: 2, templates: ClauseTemplates::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedVariant {
    pub parent_id: String,
    pub strategy: Strategy,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub seed: u64,
    pub k: usize,
    pub source_instances: usize,
    pub source_sentences: usize,
    pub pool_entries: usize,
    pub pool_dropped: usize,
    /// Target instances emitted per strategy.
    pub targets: BTreeMap<Strategy, usize>,
    /// All emitted records per strategy, including non-target aspects.
    pub records: BTreeMap<Strategy, usize>,
    pub total_including_source: usize,
    pub total_excluding_source: usize,
    pub skipped: BTreeMap<Strategy, BTreeMap<String, usize>>,
    pub add_diff_shortfall: usize,
    pub dropped: Vec<DroppedVariant>,
}

#[derive(Clone, Debug)]
pub struct Generation {
    pub instances: Vec<AdvInstance>,
    pub manifest: GenerationManifest,
}

impl Generation {
    pub fn targets(&self) -> impl Iterator<Item = &AdvInstance> {
        self.instances.iter().filter(|a| a.is_target())
    }
}

fn check_variant(variant: &AdvVariant, source: &RawInstance) -> std::result::Result<(), String> {
    for inst in std::iter::once(&variant.target).chain(&variant.others) {
        inst.validate().map_err(|r| format!("{}: {r}", inst.id))?;
    }
    if variant.target.aspect_text != source.aspect_text {
        return Err("target aspect words changed".into());
    }
    if source.opinions.as_ref().is_some_and(|o| !o.is_empty())
        && variant.target.opinions.as_ref().is_none_or(|o| o.is_empty())
    {
        return Err("target lost its opinion spans".into());
    }
    Ok(())
}

/// Builds the adversarial set: SOURCE copies of every test sentence plus all
/// applicable variants per target, in sorted instance-id order.
pub fn generate_arts_oe(
    test: &[RawInstance],
    train: &[RawInstance],
    lex: &Lexicon,
    config: &GenerationConfig,
) -> Generation {
    let pool = build_distractor_pool(train, lex);
    let mut groups = group_by_sentence(test);
    for g in &mut groups {
        g.sort_by(|a, b| a.id.cmp(&b.id));
    }
    groups.sort_by(|a, b| a[0].id.cmp(&b[0].id));

    let mut manifest = GenerationManifest {
        seed: config.seed,
        k: config.k,
        source_instances: test.len(),
        source_sentences: groups.len(),
        pool_entries: pool.len(),
        pool_dropped: pool.dropped,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    let emit = |variant: AdvVariant, source: &RawInstance, out: &mut Vec<AdvInstance>, m: &mut GenerationManifest| {
        if let Err(reason) = check_variant(&variant, source) {
            log::warn!("dropping {} variant of {}: {reason}", variant.strategy, variant.parent_id);
            m.dropped.push(DroppedVariant { parent_id: variant.parent_id.clone(), strategy: variant.strategy, reason });
            return;
        }
        m.add_diff_shortfall += variant.shortfall;
        *m.targets.entry(variant.strategy).or_default() += 1;
        *m.records.entry(variant.strategy).or_default() += 1 + variant.others.len();
        out.extend(variant.into_instances());
    };

    for group in &groups {
        for inst in group {
            let mut copy = (*inst).clone();
            copy.id = match inst.id.rsplit_once('#') {
                Some((key, k)) => format!("{key}~{}#{k}", Strategy::Source),
                None => format!("{}~{}#0", inst.id, Strategy::Source),
            };
            copy.origin = Origin::Adversarial;
            *manifest.targets.entry(Strategy::Source).or_default() += 1;
            *manifest.records.entry(Strategy::Source).or_default() += 1;
            out.push(AdvInstance { instance: copy, strategy: Strategy::Source, parent_id: inst.id.clone() });
        }
        for inst in group {
            let attempts = [
                (Strategy::RevTgt, rev_tgt(group, &inst.id, lex)),
                (Strategy::RevNon, rev_non(group, &inst.id, lex)),
                (
                    Strategy::AddDiff,
                    add_diff(group, &inst.id, &pool, config.k, &config.templates, lex, &mut rng),
                ),
            ];
            for (strategy, result) in attempts {
                match result {
                    Ok(variant) => emit(variant, inst, &mut out, &mut manifest),
                    Err(reason) => {
                        *manifest.skipped.entry(strategy).or_default().entry(reason.label().to_string()).or_default() += 1;
                    }
                }
            }
        }
    }
    let targets = |s: Strategy| manifest.targets.get(&s).copied().unwrap_or(0);
    manifest.total_excluding_source = targets(Strategy::RevTgt) + targets(Strategy::RevNon) + targets(Strategy::AddDiff);
    manifest.total_including_source = manifest.total_excluding_source + targets(Strategy::Source);
    Generation { instances: out, manifest }
}

/// Parses adversarial JSONL; `strategy` and `parent_id` are required.
pub fn from_adversarial_str(text: &str) -> Result<Vec<AdvInstance>> {
    parse_records(text)?
        .into_iter()
        .map(|(line, rec)| {
            let loc = format!("line {line}");
            let strategy = rec.strategy.ok_or_else(|| Error::format(loc.clone(), "missing strategy"))?;
            let parent_id = rec.parent_id.clone().ok_or_else(|| Error::format(loc.clone(), "missing parent_id"))?;
            let instance = rec.into_instance();
            instance.validate().map_err(|r| Error::format(loc, r.to_string()))?;
            Ok(AdvInstance { instance, strategy, parent_id })
        })
        .collect()
}

pub fn to_adversarial_string(instances: &[AdvInstance]) -> String {
    let mut out = String::new();
    for a in instances {
        out.push_str(&serde_json::to_string(&JsonRecord::from(a)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_adversarial_jsonl(path: &Path) -> Result<Vec<AdvInstance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_adversarial_str(&text)
}

pub fn write_adversarial_jsonl(path: &Path, instances: &[AdvInstance]) -> Result<()> {
    std::fs::write(path, to_adversarial_string(instances)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
