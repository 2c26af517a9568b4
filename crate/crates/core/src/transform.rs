//! Subword-level input constructions.
//!
//! | kind | layout |
//! |------|--------|
//! | AG | `[CLS] w1 .. wn [SEP]` |
//! | AC | `[CLS] w1 .. wn [SEP] a1 .. am [SEP]` |
//! | AP | `[CLS] w1 .. wn the target aspect is a1 .. am [SEP]` |
//! | AM | `[CLS] w1 .. <asp> a1 .. am </asp> .. wn [SEP]` |
//!
//! The aspect range always points at the in-sentence occurrence. Appended
//! copies, prompt words and markers map to no source word.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{RawInstance, Span};
use crate::encoder::TokenizerHandle;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Ag,
    Ac,
    Ap,
    Am,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Ag,
        TransformKind::Ac,
        TransformKind::Ap,
        TransformKind::Am,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TransformKind::Ag => "AG",
            TransformKind::Ac => "AC",
            TransformKind::Ap => "AP",
            TransformKind::Am => "AM",
        }
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ag" => Ok(TransformKind::Ag),
            "ac" => Ok(TransformKind::Ac),
            "ap" => Ok(TransformKind::Ap),
            "am" => Ok(TransformKind::Am),
            other => Err(Error::Argument(format!("unknown transform {other:?}"))),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Sentence,
    Appended,
    Special,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub max_sequence_length: usize,
    /// Words placed between the sentence and the aspect copy for AP.
    pub prompt: String,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            max_sequence_length: 128,
            prompt: "the target aspect is".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformedInput {
    pub instance_id: String,
    pub kind: TransformKind,
    pub subtokens: Vec<String>,
    pub token_ids: Vec<u32>,
    pub word_of: Vec<Option<usize>>,
    pub region_of: Vec<Region>,
    pub aspect_first: usize,
    pub aspect_last: usize,
    /// Position of the separator closing the sentence-bearing segment.
    pub sentence_sep: usize,
    pub n_words: usize,
    /// Words that survived right-truncation (a prefix of the sentence).
    pub kept_words: usize,
}

impl TransformedInput {
    pub fn len(&self) -> usize {
        self.subtokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtokens.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.kept_words < self.n_words
    }

    /// Two-segment signal for AC (everything after the sentence separator is
    /// segment 1); a single segment otherwise.
    pub fn segment_ids(&self) -> Vec<u8> {
        (0..self.len())
            .map(|i| u8::from(self.kind == TransformKind::Ac && i > self.sentence_sep))
            .collect()
    }

    /// Joins the pieces of each source word back together.
    pub fn reconstruct_words(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut last: Option<usize> = None;
        for (piece, w) in self.subtokens.iter().zip(&self.word_of) {
            let Some(w) = *w else { continue };
            let body = TokenizerHandle::piece_body(piece);
            if last == Some(w) {
                out.last_mut().expect("word started").push_str(body);
            } else {
                out.push(body.to_string());
            }
            last = Some(w);
        }
        out
    }

    pub fn preview_record(&self) -> PreviewRecord {
        PreviewRecord {
            kind: self.kind,
            subtokens: self.subtokens.clone(),
            word_of: self.word_of.clone(),
            aspect_first: self.aspect_first,
            aspect_last: self.aspect_last,
        }
    }
}

/// Debug dump of one transformed input, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewRecord {
    pub kind: TransformKind,
    pub subtokens: Vec<String>,
    pub word_of: Vec<Option<usize>>,
    pub aspect_first: usize,
    pub aspect_last: usize,
}

struct Builder {
    subtokens: Vec<String>,
    token_ids: Vec<u32>,
    word_of: Vec<Option<usize>>,
    region_of: Vec<Region>,
}

impl Builder {
    fn push(&mut self, piece: String, id: u32, word: Option<usize>, region: Region) {
        self.subtokens.push(piece);
        self.token_ids.push(id);
        self.word_of.push(word);
        self.region_of.push(region);
    }

    fn push_special(&mut self, tok: &TokenizerHandle, id: u32) {
        let piece = tok.token(id).unwrap_or_default().to_string();
        self.push(piece, id, None, Region::Special);
    }
}

fn tokenize_words(words: &[String], tok: &TokenizerHandle) -> Result<Vec<Vec<(String, u32)>>> {
    words.iter().map(|w| tok.tokenize_word(w)).collect()
}

pub fn apply(
    kind: TransformKind,
    inst: &RawInstance,
    tok: &TokenizerHandle,
    cfg: &TransformConfig,
) -> Result<TransformedInput> {
    if inst.aspect.start > inst.aspect.end || inst.aspect.end >= inst.words.len() {
        return Err(Error::Argument(format!(
            "instance {} has no valid aspect span",
            inst.id
        )));
    }
    let markers = match kind {
        TransformKind::Am => Some(tok.marker_ids()?),
        _ => None,
    };
    let pieces = tokenize_words(&inst.words, tok)?;
    let aspect_pieces: Vec<(String, u32)> = pieces[inst.aspect.start..=inst.aspect.end]
        .iter()
        .flatten()
        .cloned()
        .collect();
    let tail: Vec<(String, u32)> = match kind {
        TransformKind::Ac => aspect_pieces,
        TransformKind::Ap => {
            let prompt: Vec<String> = cfg.prompt.split_whitespace().map(String::from).collect();
            let mut t: Vec<(String, u32)> = tokenize_words(&prompt, tok)?.into_iter().flatten().collect();
            t.extend(aspect_pieces);
            t
        }
        _ => Vec::new(),
    };
    let overhead = 2
        + tail.len()
        + usize::from(kind == TransformKind::Ac)
        + if markers.is_some() { 2 } else { 0 };

    let budget = cfg.max_sequence_length.saturating_sub(overhead);
    let mut used = 0;
    let mut kept_words = 0;
    for p in &pieces {
        if used + p.len() > budget {
            break;
        }
        used += p.len();
        kept_words += 1;
    }
    if kept_words <= inst.aspect.end {
        return Err(Error::AspectTruncated {
            instance_id: inst.id.clone(),
            max_len: cfg.max_sequence_length,
        });
    }

    let mut b = Builder {
        subtokens: Vec::new(),
        token_ids: Vec::new(),
        word_of: Vec::new(),
        region_of: Vec::new(),
    };
    b.push_special(tok, tok.cls_id());
    let (mut first, mut last) = (0, 0);
    for (w, word_pieces) in pieces.iter().take(kept_words).enumerate() {
        if let (Some((open, _)), true) = (markers, w == inst.aspect.start) {
            b.push_special(tok, open);
        }
        if w == inst.aspect.start {
            first = b.subtokens.len();
        }
        for (piece, id) in word_pieces {
            b.push(piece.clone(), *id, Some(w), Region::Sentence);
        }
        if w == inst.aspect.end {
            last = b.subtokens.len() - 1;
            if let Some((_, close)) = markers {
                b.push_special(tok, close);
            }
        }
    }
    let sentence_sep;
    match kind {
        TransformKind::Ac => {
            sentence_sep = b.subtokens.len();
            b.push_special(tok, tok.sep_id());
            for (piece, id) in tail {
                b.push(piece, id, None, Region::Appended);
            }
            b.push_special(tok, tok.sep_id());
        }
        _ => {
            for (piece, id) in tail {
                b.push(piece, id, None, Region::Appended);
            }
            sentence_sep = b.subtokens.len();
            b.push_special(tok, tok.sep_id());
        }
    }
    debug_assert!(b.subtokens.len() <= cfg.max_sequence_length);

    Ok(TransformedInput {
        instance_id: inst.id.clone(),
        kind,
        subtokens: b.subtokens,
        token_ids: b.token_ids,
        word_of: b.word_of,
        region_of: b.region_of,
        aspect_first: first,
        aspect_last: last,
        sentence_sep,
        n_words: inst.words.len(),
        kept_words,
    })
}

/// `[CLS] sentence [SEP]`.
pub fn apply_generality(inst: &RawInstance, tok: &TokenizerHandle, cfg: &TransformConfig) -> Result<TransformedInput> {
    apply(TransformKind::Ag, inst, tok, cfg)
}

/// Sentence pair with the aspect as second segment.
pub fn apply_companion(inst: &RawInstance, tok: &TokenizerHandle, cfg: &TransformConfig) -> Result<TransformedInput> {
    apply(TransformKind::Ac, inst, tok, cfg)
}

/// Sentence followed by the prompt and the aspect.
pub fn apply_prompt(inst: &RawInstance, tok: &TokenizerHandle, cfg: &TransformConfig) -> Result<TransformedInput> {
    apply(TransformKind::Ap, inst, tok, cfg)
}

/// Aspect wrapped in open/close markers. Requires registered markers.
pub fn apply_marker(inst: &RawInstance, tok: &TokenizerHandle, cfg: &TransformConfig) -> Result<TransformedInput> {
    apply(TransformKind::Am, inst, tok, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
    Ignore,
}

impl Tag {
    /// Class index used by the tagging head (B, I, O).
    pub fn class(self) -> Option<usize> {
        match self {
            Tag::B => Some(0),
            Tag::I => Some(1),
            Tag::O => Some(2),
            Tag::Ignore => None,
        }
    }

    pub fn from_class(c: usize) -> Tag {
        match c {
            0 => Tag::B,
            1 => Tag::I,
            _ => Tag::O,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSequence {
    pub labels: Vec<Tag>,
    /// Some gold span was cut off by truncation.
    pub unscoreable: bool,
}

/// Projects word-level gold opinion spans onto subwords: B on the first piece
/// of a span's first word, I on every other piece of the span, O elsewhere in
/// the sentence, IGNORE outside it.
pub fn align_oe_labels(inst: &RawInstance, ti: &TransformedInput) -> Result<TagSequence> {
    let spans = inst.opinions.as_ref().ok_or_else(|| {
        Error::Argument(format!("instance {} has no opinion spans", inst.id))
    })?;
    let unscoreable = spans.iter().any(|s| s.end >= ti.kept_words);
    let mut labels = Vec::with_capacity(ti.len());
    let mut prev_word = None;
    for (w, region) in ti.word_of.iter().zip(&ti.region_of) {
        let tag = match (w, region) {
            (Some(w), Region::Sentence) => {
                match spans.iter().find(|s| s.contains(*w)) {
                    Some(s) if s.start == *w && prev_word != Some(*w) => Tag::B,
                    Some(_) => Tag::I,
                    None => Tag::O,
                }
            }
            _ => Tag::Ignore,
        };
        if region == &Region::Sentence {
            prev_word = *w;
        }
        labels.push(tag);
    }
    Ok(TagSequence { labels, unscoreable })
}

/// Decodes subword tags into word-level spans. Runs of B I* over sentence
/// pieces become spans; IGNORE positions are skipped; an I without an open
/// span opens one. A B on a later piece of the word that opened the current
/// span continues it.
pub fn project_predictions(ti: &TransformedInput, tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for ((tag, w), region) in tags.iter().zip(&ti.word_of).zip(&ti.region_of) {
        let (Some(w), Region::Sentence) = (*w, region) else {
            continue;
        };
        match tag {
            Tag::Ignore => {}
            Tag::O => spans.extend(open.take()),
            Tag::B => match open.as_mut() {
                Some(s) if s.end == w => {}
                _ => {
                    spans.extend(open.take());
                    open = Some(Span::new(w, w));
                }
            },
            Tag::I => match open.as_mut() {
                Some(s) => s.end = w,
                None => open = Some(Span::new(w, w)),
            },
        }
    }
    spans.extend(open);
    spans
}
