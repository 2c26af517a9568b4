//! SemEval-2014 aspect-term XML.

use super::words::split_words;
use super::{Domain, Loaded, Polarity, RawInstance, RejectReason, Span, Task};
use crate::error::{Error, Result};

/// Parses a SemEval-2014 `<sentences>` document into one instance per
/// (sentence, aspect term). Character offsets locate the aspect when present;
/// otherwise the first occurrence of the term is used and a warning recorded.
/// Aspects labeled `conflict` are dropped.
pub fn parse_semeval_xml(text: &str, domain: Domain) -> Result<Loaded> {
    let mut loaded = Loaded::default();
    if text.trim().is_empty() {
        return Ok(loaded);
    }
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::format(format!("line {} column {}", pos.row, pos.col), e.to_string())
    })?;

    for (s_idx, sentence) in doc
        .descendants()
        .filter(|n| n.has_tag_name("sentence"))
        .enumerate()
    {
        let sid = sentence
            .attribute("id")
            .map(str::to_string)
            .unwrap_or_else(|| format!("sentence{s_idx}"));
        let locator = |what: &str| {
            let pos = doc.text_pos_at(sentence.range().start);
            format!("<sentence id={sid:?}> (line {}) {what}", pos.row)
        };
        let raw = sentence
            .children()
            .find(|n| n.has_tag_name("text"))
            .and_then(|n| n.text())
            .ok_or_else(|| Error::format(locator("<text>"), "missing sentence text"))?;
        let tokens = split_words(raw);
        let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();

        let terms = sentence
            .descendants()
            .filter(|n| n.has_tag_name("aspectTerm"));
        for (k, term) in terms.enumerate() {
            let id = format!("{sid}#{k}");
            let term_text = term
                .attribute("term")
                .ok_or_else(|| Error::format(locator(&format!("<aspectTerm> {k}")), "missing term attribute"))?;
            let polarity_attr = term.attribute("polarity").ok_or_else(|| {
                Error::format(locator(&format!("<aspectTerm> {k}")), "missing polarity attribute")
            })?;
            if polarity_attr.eq_ignore_ascii_case("conflict") {
                loaded.reject(id, RejectReason::ConflictPolarity);
                continue;
            }
            let polarity: Polarity = polarity_attr.parse().map_err(|_| {
                Error::format(
                    locator(&format!("<aspectTerm> {k}")),
                    format!("unknown polarity {polarity_attr:?}"),
                )
            })?;

            let offsets = match (term.attribute("from"), term.attribute("to")) {
                (Some(f), Some(t)) => match (f.parse::<usize>(), t.parse::<usize>()) {
                    (Ok(f), Ok(t)) => Some((f, t)),
                    _ => {
                        return Err(Error::format(
                            locator(&format!("<aspectTerm> {k}")),
                            "non-numeric offsets",
                        ))
                    }
                },
                _ => None,
            };

            let span = match offsets {
                Some((from, to)) => {
                    let covered: Vec<usize> = tokens
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.char_start < to && from < t.char_end)
                        .map(|(i, _)| i)
                        .collect();
                    match (covered.first(), covered.last()) {
                        (Some(&a), Some(&b)) => Some(Span::new(a, b)),
                        _ => None,
                    }
                }
                None => locate_first(&words, term_text, &id, &mut loaded.warnings),
            };
            let Some(span) = span else {
                loaded.reject(id, RejectReason::AspectNotFound);
                continue;
            };
            let inst = RawInstance::new(id, words.clone(), span, domain)?.with_polarity(polarity);
            loaded.admit(inst, Task::Sc);
        }
    }
    Ok(loaded)
}

/// Finds the first occurrence of `term` (word-split the same way as the
/// sentence); warns when it occurs more than once.
pub(crate) fn locate_first(
    words: &[String],
    term: &str,
    id: &str,
    warnings: &mut Vec<String>,
) -> Option<Span> {
    let needle: Vec<String> = split_words(term).into_iter().map(|t| t.text).collect();
    if needle.is_empty() || needle.len() > words.len() {
        return None;
    }
    let hits: Vec<usize> = (0..=words.len() - needle.len())
        .filter(|&i| words[i..i + needle.len()] == needle[..])
        .collect();
    if hits.len() > 1 {
        warnings.push(format!(
            "{id}: aspect {term:?} occurs {} times, using the first",
            hits.len()
        ));
    }
    hits.first().map(|&i| Span::new(i, i + needle.len() - 1))
}
