//! Greedy longest-match-first subword segmentation (WordPiece style).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ASPECT_OPEN: &str = "<asp>";
pub const DEFAULT_ASPECT_CLOSE: &str = "</asp>";

/// Names of the special tokens. Backbone families differ here (`[CLS]`/`[SEP]`
/// versus `<s>`/`</s>`); transforms only ever ask for ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecialTokens {
    pub cls: String,
    pub sep: String,
    pub unk: String,
    pub aspect_open: String,
    pub aspect_close: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            cls: "[CLS]".into(),
            sep: "[SEP]".into(),
            unk: "[UNK]".into(),
            aspect_open: DEFAULT_ASPECT_OPEN.into(),
            aspect_close: DEFAULT_ASPECT_CLOSE.into(),
        }
    }
}

impl SpecialTokens {
    pub fn roberta() -> Self {
        SpecialTokens {
            cls: "<s>".into(),
            sep: "</s>".into(),
            unk: "<unk>".into(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TokenizerState", into = "TokenizerState")]
pub struct TokenizerHandle {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    specials: SpecialTokens,
    cls: u32,
    sep: u32,
    unk: Option<u32>,
    markers: Option<(u32, u32)>,
    lowercase: bool,
}

#[derive(Serialize, Deserialize)]
struct TokenizerState {
    vocab: Vec<String>,
    specials: SpecialTokens,
    markers_registered: bool,
    lowercase: bool,
}

impl From<TokenizerHandle> for TokenizerState {
    fn from(t: TokenizerHandle) -> Self {
        TokenizerState {
            markers_registered: t.markers.is_some(),
            vocab: t.vocab,
            specials: t.specials,
            lowercase: t.lowercase,
        }
    }
}

impl From<TokenizerState> for TokenizerHandle {
    fn from(s: TokenizerState) -> Self {
        let mut t = TokenizerHandle::from_vocab(s.vocab, s.specials, s.lowercase)
            .expect("checkpointed vocabulary carries its special tokens");
        if s.markers_registered {
            let open = t.index[&t.specials.aspect_open];
            let close = t.index[&t.specials.aspect_close];
            t.markers = Some((open, close));
        }
        t
    }
}

const MAX_CHARS_PER_WORD: usize = 100;
const CONTINUATION: &str = "##";

impl TokenizerHandle {
    pub fn from_vocab(vocab: Vec<String>, specials: SpecialTokens, lowercase: bool) -> Result<Self> {
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            index.entry(tok.clone()).or_insert(i as u32);
        }
        let lookup = |name: &str| {
            index.get(name).copied().ok_or_else(|| {
                Error::Config(format!("special token {name:?} missing from vocabulary"))
            })
        };
        let cls = lookup(&specials.cls)?;
        let sep = lookup(&specials.sep)?;
        let unk = index.get(&specials.unk).copied();
        Ok(TokenizerHandle {
            vocab,
            index,
            specials,
            cls,
            sep,
            unk,
            markers: None,
            lowercase,
        })
    }

    /// Reads a one-token-per-line vocabulary file.
    pub fn from_vocab_file(path: &Path, specials: SpecialTokens, lowercase: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vocab = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        Self::from_vocab(vocab, specials, lowercase)
    }

    /// Builds a vocabulary from corpus words: the special tokens, every
    /// character both word-initially and as a continuation piece, and every
    /// word seen at least `min_count` times. Any word over the corpus alphabet
    /// therefore segments without `[UNK]`.
    pub fn build_from_words<'a>(
        words: impl IntoIterator<Item = &'a str>,
        min_count: usize,
        specials: SpecialTokens,
        lowercase: bool,
    ) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars = std::collections::BTreeSet::new();
        for w in words {
            let w = if lowercase { w.to_lowercase() } else { w.to_string() };
            chars.extend(w.chars());
            *counts.entry(w).or_default() += 1;
        }
        let mut vocab = vec![specials.cls.clone(), specials.sep.clone(), specials.unk.clone()];
        for c in &chars {
            vocab.push(c.to_string());
            vocab.push(format!("{CONTINUATION}{c}"));
        }
        for (w, n) in counts {
            if n >= min_count && w.chars().count() > 1 {
                vocab.push(w);
            }
        }
        vocab.dedup();
        Self::from_vocab(vocab, specials, lowercase)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn has_markers(&self) -> bool {
        self.markers.is_some()
    }

    /// Ids of the aspect open/close markers.
    pub fn marker_ids(&self) -> Result<(u32, u32)> {
        self.markers.ok_or_else(|| {
            Error::Config("aspect markers are not registered in this tokenizer".into())
        })
    }

    /// Returns a handle in which the aspect markers are atomic tokens. The
    /// vocabulary grows by exactly two on first registration; registering
    /// again is a no-op.
    pub fn register_markers(&self) -> Result<TokenizerHandle> {
        if self.markers.is_some() {
            return Ok(self.clone());
        }
        let open = &self.specials.aspect_open;
        let close = &self.specials.aspect_close;
        if open == close {
            return Err(Error::Config("aspect markers must differ".into()));
        }
        for m in [open, close] {
            if self.index.contains_key(m) {
                return Err(Error::Config(format!(
                    "marker {m:?} collides with an existing vocabulary token"
                )));
            }
        }
        let mut out = self.clone();
        let open_id = out.push_token(open.clone());
        let close_id = out.push_token(close.clone());
        out.markers = Some((open_id, close_id));
        Ok(out)
    }

    fn push_token(&mut self, tok: String) -> u32 {
        let id = self.vocab.len() as u32;
        self.index.insert(tok.clone(), id);
        self.vocab.push(tok);
        id
    }

    /// Segments one word into subword pieces with their ids.
    pub fn tokenize_word(&self, word: &str) -> Result<Vec<(String, u32)>> {
        if word.trim().is_empty() {
            return Err(Error::Tokenization {
                word: word.to_string(),
                reason: "empty word".into(),
            });
        }
        let word = if self.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        };
        let unknown = || match self.unk {
            Some(id) => Ok(vec![(self.specials.unk.clone(), id)]),
            None => Err(Error::Tokenization {
                word: word.clone(),
                reason: "no segmentation and no unknown token".into(),
            }),
        };
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_CHARS_PER_WORD {
            return unknown();
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let body: String = chars[start..end].iter().collect();
                let candidate = if start > 0 {
                    format!("{CONTINUATION}{body}")
                } else {
                    body
                };
                if let Some(&id) = self.index.get(&candidate) {
                    found = Some((candidate, id));
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => pieces.push(piece),
                None => return unknown(),
            }
            start = end;
        }
        Ok(pieces)
    }

    /// Tokenizes whitespace-separated text. Registered markers stay atomic.
    pub fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            if let Some((open, close)) = self.markers {
                if w == self.specials.aspect_open {
                    out.push(self.vocab[open as usize].clone());
                    continue;
                }
                if w == self.specials.aspect_close {
                    out.push(self.vocab[close as usize].clone());
                    continue;
                }
            }
            out.extend(self.tokenize_word(w)?.into_iter().map(|(p, _)| p));
        }
        Ok(out)
    }

    /// Strips the continuation prefix from a piece.
    pub fn piece_body(piece: &str) -> &str {
        piece.strip_prefix(CONTINUATION).unwrap_or(piece)
    }
}
