use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Polarity;
use crate::error::{Error, Result};

const SEED_TSV: &str = include_str!("../../data/seed_lexicon.tsv");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub antonym: String,
    pub polarity: Polarity,
}

/// Opinion-word antonyms with polarities, negators and conjunction flips.
///
/// Keys are lowercase. Loading adds the reverse direction of every pair
/// unless the file already lists it.
#[derive(Clone, Debug)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    pub negators: Vec<String>,
    pub conjunction_flips: Vec<(String, String)>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon {
            entries: BTreeMap::new(),
            negators: vec!["not".into()],
            conjunction_flips: vec![("and".into(), "but".into())],
        }
    }

    /// The built-in lexicon of common review opinion words.
    pub fn seed() -> Self {
        Self::from_tsv_str(SEED_TSV).expect("seed lexicon is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_str(&text).map_err(|e| match e {
            Error::Format { locator, message } => {
                Error::Format { locator: format!("{}: {locator}", path.display()), message }
            }
            other => other,
        })
    }

    /// Parses `word \t antonym \t polarity` lines; `#` starts a comment line.
    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut explicit: Vec<(String, LexiconEntry)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = format!("line {}", i + 1);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::format(loc, format!("expected 3 tab-separated columns, found {}", cols.len())));
            }
            let word = cols[0].trim().to_lowercase();
            let antonym = cols[1].trim().to_lowercase();
            if word.is_empty() || antonym.is_empty() {
                return Err(Error::format(loc, "empty word or antonym"));
            }
            if word == antonym {
                return Err(Error::format(loc, format!("{word:?} maps to itself")));
            }
            let polarity: Polarity = cols[2].trim().parse().map_err(|_| {
                Error::format(loc.clone(), format!("unknown polarity {:?}", cols[2]))
            })?;
            if polarity == Polarity::Neutral {
                return Err(Error::format(loc, "opinion words must be positive or negative"));
            }
            explicit.push((word, LexiconEntry { antonym, polarity }));
        }
        let mut lex = Lexicon::empty();
        for (word, entry) in &explicit {
            if let Some(prev) = lex.entries.get(word) {
                if prev != entry {
                    return Err(Error::format(word.clone(), "listed twice with different antonyms"));
                }
            }
            lex.entries.insert(word.clone(), entry.clone());
        }
        for (word, entry) in &explicit {
            if let Some(back) = lex.entries.get(&entry.antonym) {
                let explicit_back = explicit.iter().any(|(w, _)| w == &entry.antonym);
                if explicit_back && (back.antonym != *word || back.polarity == entry.polarity) {
                    return Err(Error::format(
                        word.clone(),
                        format!("inconsistent with the entry for {:?}", entry.antonym),
                    ));
                }
                continue;
            }
            let polarity = entry.polarity.reversed().expect("non-neutral");
            lex.entries.insert(entry.antonym.clone(), LexiconEntry { antonym: word.clone(), polarity });
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn antonym(&self, word: &str) -> Option<&str> {
        self.entry(word).map(|e| e.antonym.as_str())
    }

    pub fn polarity(&self, word: &str) -> Option<Polarity> {
        self.entry(word).map(|e| e.polarity)
    }

    pub fn is_negator(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.negators.iter().any(|n| *n == w)
    }

    pub fn flipped_conjunction(&self, word: &str) -> Option<&str> {
        let w = word.to_lowercase();
        self.conjunction_flips.iter().find_map(|(a, b)| {
            if *a == w {
                Some(b.as_str())
            } else if *b == w {
                Some(a.as_str())
            } else {
                None
            }
        })
    }

    pub fn is_conjunction(&self, word: &str) -> bool {
        self.flipped_conjunction(word).is_some()
    }

    pub fn add_pair(&mut self, word: &str, antonym: &str, polarity: Polarity) -> Result<()> {
        let text = format!("{word}\t{antonym}\t{}", polarity.as_str());
        let extra = Self::from_tsv_str(&text)?;
        self.entries.extend(extra.entries);
        Ok(())
    }
}

/// Copies the capitalisation of the first letter of `like` onto `word`.
pub(crate) fn match_case(word: &str, like: &str) -> String {
    let upper = like.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return word.to_string();
    }
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
