use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::corpus::{Polarity, RawInstance, Span};

const CLAUSE_PUNCT: [&str; 6] = [",", ".", ";", "!", "?", ":"];

/// An opinionated clause about one aspect, ready to be appended to another
/// sentence. Spans index into `clause`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorEntry {
    pub aspect_text: String,
    pub clause: Vec<String>,
    pub aspect: Span,
    pub opinions: Vec<Span>,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistractorPool {
    pub entries: Vec<DistractorEntry>,
    /// Pairs dropped because no polarity could be derived.
    pub dropped: usize,
}

impl DistractorPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_boundary(word: &str, lex: &Lexicon) -> bool {
    CLAUSE_PUNCT.contains(&word) || lex.is_conjunction(word)
}

/// Harvests one entry per annotated (aspect, opinions) pair. The clause is
/// the smallest window covering aspect and opinions, widened to the nearest
/// punctuation or conjunction on both sides. Polarity comes from the gold
/// label when present, else from the lexicon.
pub fn build_distractor_pool(train: &[RawInstance], lex: &Lexicon) -> DistractorPool {
    let mut pool = DistractorPool::default();
    let mut seen = HashSet::new();
    for inst in train {
        let Some(opinions) = inst.opinions.as_ref().filter(|o| !o.is_empty()) else {
            continue;
        };
        if inst.aspect_text.trim().is_empty() || inst.aspect_text.eq_ignore_ascii_case("null") {
            continue;
        }
        let polarity = inst.polarity.or_else(|| {
            opinions.iter().flat_map(|s| s.start..=s.end).find_map(|i| {
                let p = lex.polarity(&inst.words[i])?;
                if i > 0 && lex.is_negator(&inst.words[i - 1]) {
                    p.reversed()
                } else {
                    Some(p)
                }
            })
        });
        let Some(polarity) = polarity else {
            pool.dropped += 1;
            continue;
        };
        let mut lo = opinions.iter().map(|s| s.start).fold(inst.aspect.start, usize::min);
        let mut hi = opinions.iter().map(|s| s.end).fold(inst.aspect.end, usize::max);
        while lo > 0 && !is_boundary(&inst.words[lo - 1], lex) {
            lo -= 1;
        }
        while hi + 1 < inst.words.len() && !is_boundary(&inst.words[hi + 1], lex) {
            hi += 1;
        }
        let mut clause: Vec<String> = inst.words[lo..=hi].to_vec();
        if lo == 0 && clause[0] != "I" {
            let first = &clause[0];
            let mut chars = first.chars();
            let titlecase = chars.next().is_some_and(char::is_uppercase) && chars.all(|c| !c.is_uppercase());
            if titlecase {
                clause[0] = first.to_lowercase();
            }
        }
        let shift = |s: Span| Span::new(s.start - lo, s.end - lo);
        let aspect = shift(inst.aspect);
        if !seen.insert(clause.join(" ").to_lowercase()) {
            continue;
        }
        pool.entries.push(DistractorEntry {
            aspect_text: clause[aspect.start..=aspect.end].join(" "),
            aspect,
            opinions: opinions.iter().copied().map(shift).collect(),
            clause,
            polarity,
        });
    }
    pool
}
