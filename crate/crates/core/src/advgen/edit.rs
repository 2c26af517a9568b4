//! Word-level sentence editing that keeps every annotated span consistent.

use std::collections::HashSet;

use super::lexicon::{match_case, Lexicon};
use crate::corpus::{Polarity, RawInstance, Span};

const CLAUSE_PUNCT: [&str; 6] = [",", ".", ";", "!", "?", ":"];

#[derive(Clone, Debug)]
pub(crate) struct Annotation {
    pub aspect: Span,
    pub opinions: Vec<Span>,
    /// Whether `opinions` is gold data rather than spans located for editing.
    pub annotated: bool,
    pub polarity: Option<Polarity>,
}

#[derive(Clone, Debug)]
pub(crate) struct Draft {
    pub words: Vec<String>,
    pub annots: Vec<Annotation>,
    flipped: HashSet<usize>,
}

impl Draft {
    /// Returns `None` when the group's instances disagree on the sentence.
    pub fn from_group(group: &[&RawInstance]) -> Option<Draft> {
        let words = group.first()?.words.clone();
        if group.iter().any(|i| i.words != words) {
            return None;
        }
        let annots = group
            .iter()
            .map(|i| Annotation {
                aspect: i.aspect,
                opinions: i.opinions.clone().unwrap_or_default(),
                annotated: i.opinions.is_some(),
                polarity: i.polarity,
            })
            .collect();
        Some(Draft { words, annots, flipped: HashSet::new() })
    }

    fn spans_mut(&mut self) -> impl Iterator<Item = (bool, &mut Span)> {
        self.annots.iter_mut().flat_map(|a| {
            std::iter::once((false, &mut a.aspect)).chain(a.opinions.iter_mut().map(|s| (true, s)))
        })
    }

    fn in_any_span(&self, i: usize) -> bool {
        self.annots
            .iter()
            .any(|a| a.aspect.contains(i) || a.opinions.iter().any(|s| s.contains(i)))
    }

    fn in_aspect(&self, i: usize) -> bool {
        self.annots.iter().any(|a| a.aspect.contains(i))
    }

    /// Inserts `word` before position `i`. Opinion spans starting at `i`
    /// grow to cover it; everything at or after `i` shifts right.
    pub fn insert(&mut self, i: usize, word: &str) {
        self.words.insert(i, word.to_string());
        for (is_opinion, s) in self.spans_mut() {
            if s.start > i || (s.start == i && !is_opinion) {
                s.start += 1;
                s.end += 1;
            } else if s.end >= i {
                s.end += 1;
            }
        }
    }

    /// Removes the word at `i`; callers guarantee no single-word span sits there.
    pub fn delete(&mut self, i: usize) {
        self.words.remove(i);
        for (_, s) in self.spans_mut() {
            if s.start > i {
                s.start -= 1;
                s.end -= 1;
            } else if s.end >= i {
                s.end -= 1;
            }
        }
    }

    fn single_word_span_at(&self, i: usize) -> bool {
        self.annots.iter().any(|a| {
            std::iter::once(&a.aspect)
                .chain(&a.opinions)
                .any(|s| s.start == i && s.end == i)
        })
    }

    fn word_polarity(&self, i: usize, lex: &Lexicon) -> Option<Polarity> {
        let p = lex.polarity(&self.words[i])?;
        if i > 0 && lex.is_negator(&self.words[i - 1]) {
            p.reversed()
        } else {
            Some(p)
        }
    }

    /// Gold polarity, else the lexicon polarity of the first opinion word found.
    pub fn polarity_of(&self, a: usize, lex: &Lexicon) -> Option<Polarity> {
        let ann = &self.annots[a];
        if ann.polarity.is_some() {
            return ann.polarity;
        }
        ann.opinions
            .iter()
            .flat_map(|s| s.start..=s.end)
            .find_map(|i| self.word_polarity(i, lex))
    }

    fn is_boundary(&self, i: usize, lex: &Lexicon) -> bool {
        let w = self.words[i].as_str();
        CLAUSE_PUNCT.contains(&w) || lex.is_conjunction(w)
    }

    /// Word positions of the clause around the aspect of annotation `a`.
    fn clause_of(&self, a: usize, lex: &Lexicon) -> (usize, usize) {
        let asp = self.annots[a].aspect;
        let mut lo = asp.start;
        while lo > 0 && !self.is_boundary(lo - 1, lex) {
            lo -= 1;
        }
        let mut hi = asp.end;
        while hi + 1 < self.words.len() && !self.is_boundary(hi + 1, lex) {
            hi += 1;
        }
        (lo, hi)
    }

    /// Makes sure annotation `a` has opinion spans to edit, locating the
    /// nearest lexicon word of matching polarity in its clause when the
    /// data carries none. Returns false when nothing editable exists.
    pub fn ensure_opinions(&mut self, a: usize, lex: &Lexicon) -> bool {
        if !self.annots[a].opinions.is_empty() {
            return true;
        }
        let Some(want) = self.annots[a].polarity.filter(|p| *p != Polarity::Neutral) else {
            return false;
        };
        let (lo, hi) = self.clause_of(a, lex);
        let asp = self.annots[a].aspect;
        let best = (lo..=hi)
            .filter(|&i| !self.in_aspect(i) && self.word_polarity(i, lex) == Some(want))
            .min_by_key(|&i| if i < asp.start { asp.start - i } else { i - asp.end });
        let Some(i) = best else {
            return false;
        };
        let start = if i > 0 && lex.is_negator(&self.words[i - 1]) { i - 1 } else { i };
        self.annots[a].opinions.push(Span::new(start, i));
        true
    }

    /// Reverses one opinion span: antonym replacement, else removal of an
    /// existing negator, else negator insertion.
    fn reverse_span(&mut self, a: usize, o: usize, lex: &Lexicon) {
        let span = self.annots[a].opinions[o];
        let mut replaced = false;
        for i in span.start..=span.end {
            if let Some(ant) = lex.antonym(&self.words[i]) {
                self.words[i] = match_case(ant, &self.words[i]);
                replaced = true;
            }
        }
        if replaced {
            return;
        }
        if span.len() > 1 && lex.is_negator(&self.words[span.start]) {
            self.delete(span.start);
            return;
        }
        if span.start > 0
            && lex.is_negator(&self.words[span.start - 1])
            && !self.in_any_span(span.start - 1)
            && !self.single_word_span_at(span.start - 1)
        {
            self.delete(span.start - 1);
            return;
        }
        let negator = match_case(&lex.negators[0], &self.words[span.start]);
        let original = self.words[span.start].clone();
        if original.chars().next().is_some_and(char::is_uppercase) {
            self.words[span.start] = original.to_lowercase();
        }
        self.insert(span.start, &negator);
    }

    pub fn reverse_opinions(&mut self, a: usize, lex: &Lexicon) {
        for o in 0..self.annots[a].opinions.len() {
            self.reverse_span(a, o, lex);
        }
    }

    fn region(&self, a: usize) -> Span {
        let ann = &self.annots[a];
        ann.opinions.iter().fold(ann.aspect, |r, s| {
            Span::new(r.start.min(s.start), r.end.max(s.end))
        })
    }

    /// Flips the first and/but between the clauses of annotations `e` and `u`.
    pub fn flip_conjunction_between(&mut self, e: usize, u: usize, lex: &Lexicon) {
        let (r1, r2) = (self.region(e), self.region(u));
        if r1.overlaps(&r2) {
            return;
        }
        let (left, right) = if r1.start < r2.start { (r1, r2) } else { (r2, r1) };
        for i in left.end + 1..right.start {
            if self.in_any_span(i) {
                continue;
            }
            if let Some(other) = lex.flipped_conjunction(&self.words[i]) {
                if self.flipped.insert(i) {
                    self.words[i] = match_case(other, &self.words[i]);
                }
                return;
            }
        }
    }

    pub fn opinions_overlap(&self, a: usize, b: usize) -> bool {
        let other = &self.annots[b];
        self.annots[a].opinions.iter().any(|s| {
            other.opinions.iter().any(|t| s.overlaps(t)) || s.overlaps(&other.aspect)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;

    fn draft(text: &str, aspect: (usize, usize), opinions: Vec<Span>) -> Draft {
        let words = text.split(' ').map(String::from).collect();
        let inst = RawInstance::new("d#0", words, Span::new(aspect.0, aspect.1), Domain::Laptop)
            .unwrap()
            .with_opinions(opinions);
        Draft::from_group(&[&inst]).unwrap()
    }

    #[test]
    fn insertion_grows_opinion_and_shifts_rest() {
        let mut d = draft("the food is tasty and cheap", (1, 1), vec![Span::new(3, 3), Span::new(5, 5)]);
        d.insert(3, "not");
        assert_eq!(d.annots[0].opinions, vec![Span::new(3, 4), Span::new(6, 6)]);
        assert_eq!(d.annots[0].aspect, Span::new(1, 1));
        d.delete(3);
        assert_eq!(d.annots[0].opinions, vec![Span::new(3, 3), Span::new(5, 5)]);
    }

    #[test]
    fn insertion_before_aspect_shifts_it() {
        let mut d = draft("good food", (1, 1), vec![Span::new(0, 0)]);
        d.insert(1, "x");
        assert_eq!(d.annots[0].aspect, Span::new(2, 2));
        assert_eq!(d.annots[0].opinions, vec![Span::new(0, 0)]);
    }

    #[test]
    fn reversal_deletes_existing_negator() {
        let lex = Lexicon::empty();
        let mut d = draft("the food is not bland", (1, 1), vec![Span::new(3, 4)]);
        d.reverse_opinions(0, &lex);
        assert_eq!(d.words.join(" "), "the food is bland");
        assert_eq!(d.annots[0].opinions, vec![Span::new(3, 3)]);

        let mut d = draft("the food is not bland", (1, 1), vec![Span::new(4, 4)]);
        d.reverse_opinions(0, &lex);
        assert_eq!(d.words.join(" "), "the food is bland");
        assert_eq!(d.annots[0].opinions, vec![Span::new(3, 3)]);
    }

    #[test]
    fn located_opinion_respects_clause() {
        let lex = Lexicon::seed();
        let words = "the food was great but the staff seemed rude".split(' ').map(String::from).collect();
        let inst = RawInstance::new("d#0", words, Span::new(6, 6), Domain::Restaurant)
            .unwrap()
            .with_polarity(Polarity::Negative);
        let mut d = Draft::from_group(&[&inst]).unwrap();
        assert!(d.ensure_opinions(0, &lex));
        assert_eq!(d.annots[0].opinions, vec![Span::new(8, 8)]);
    }
}
