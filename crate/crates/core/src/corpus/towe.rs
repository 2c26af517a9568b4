//! Tab-separated opinion-extraction data.
//!
//! Two row layouts are accepted, detected per row:
//!
//! ```text
//! s1 \t The food is tasty ! \t food##1,1 \t tasty##3,3;...
//! s1 \t The food is tasty ! \t The\O food\B is\O tasty\O !\O \t The\O food\O is\O tasty\B !\O
//! ```
//!
//! The first is the documented index form (inclusive word indices), the second
//! the word\TAG form of the original release. A header row starting with
//! `s_id` is skipped.

use std::collections::HashMap;

use super::{Domain, Loaded, RawInstance, RejectReason, Span, Task};
use crate::error::{Error, Result};

pub fn parse_towe_tsv(text: &str, domain: Domain) -> Result<Loaded> {
    let mut loaded = Loaded::default();
    let mut per_sentence: HashMap<String, usize> = HashMap::new();

    for (i, line) in text.lines().enumerate() {
        let locator = || format!("line {}", i + 1);
        if line.trim().is_empty() || (i == 0 && line.starts_with("s_id")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 || cols.len() > 4 {
            return Err(Error::format(
                locator(),
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let sid = cols[0].trim();
        let k = per_sentence.entry(sid.to_string()).or_default();
        let id = format!("{sid}#{k}");
        *k += 1;

        let words: Vec<String> = cols[1].split_whitespace().map(String::from).collect();
        let opinion_col = cols.get(3).copied().unwrap_or("").trim();

        let parsed = if is_tag_column(cols[2]) {
            parse_tagged_row(&words, cols[2], opinion_col).map_err(|m| Error::format(locator(), m))?
        } else {
            parse_index_row(&words, cols[2], opinion_col).map_err(|m| Error::format(locator(), m))?
        };
        let (aspect, mut opinions) = match parsed {
            Ok(v) => v,
            Err(reason) => {
                loaded.reject(id, reason);
                continue;
            }
        };
        if aspect.end >= words.len() {
            loaded.reject(id, RejectReason::SpanOutOfRange);
            continue;
        }
        opinions.sort();
        let inst = RawInstance::new(id, words, aspect, domain)?.with_opinions(opinions);
        loaded.admit(inst, Task::Oe);
    }
    Ok(loaded)
}

type RowResult = std::result::Result<(Span, Vec<Span>), RejectReason>;

fn is_tag_column(col: &str) -> bool {
    col.split_whitespace()
        .all(|t| matches!(t.rsplit_once('\\'), Some((_, "O" | "B" | "I"))))
}

fn parse_pair(s: &str) -> std::result::Result<Span, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected start,end in {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad index in {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad index in {s:?}"))?;
    Ok(Span::new(a, b))
}

fn parse_annotated(s: &str) -> std::result::Result<(String, Span), String> {
    let (text, pos) = s
        .rsplit_once("##")
        .ok_or_else(|| format!("expected text##start,end in {s:?}"))?;
    Ok((text.trim().to_string(), parse_pair(pos)?))
}

fn parse_index_row(
    words: &[String],
    aspect_col: &str,
    opinion_col: &str,
) -> std::result::Result<RowResult, String> {
    let (aspect_text, aspect) = parse_annotated(aspect_col.trim())?;
    if aspect.start > aspect.end || aspect.end >= words.len() {
        return Ok(Err(RejectReason::SpanOutOfRange));
    }
    if words[aspect.start..=aspect.end].join(" ") != aspect_text {
        return Ok(Err(RejectReason::Invalid(format!(
            "aspect {aspect_text:?} does not match words at its indices"
        ))));
    }
    let mut opinions = Vec::new();
    for part in opinion_col.split(';').filter(|p| !p.trim().is_empty()) {
        let (_, span) = parse_annotated(part.trim())?;
        if span.start > span.end || span.end >= words.len() {
            return Ok(Err(RejectReason::SpanOutOfRange));
        }
        opinions.push(span);
    }
    Ok(Ok((aspect, opinions)))
}

fn tagged_spans(words: &[String], col: &str) -> std::result::Result<Vec<Span>, String> {
    let tags: Vec<&str> = col
        .split_whitespace()
        .map(|t| t.rsplit_once('\\').map(|(_, tag)| tag).unwrap_or("O"))
        .collect();
    if tags.len() != words.len() {
        return Err(format!(
            "{} tags for a {}-word sentence",
            tags.len(),
            words.len()
        ));
    }
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            "B" => {
                spans.extend(open.take());
                open = Some(Span::new(i, i));
            }
            "I" => match open.as_mut() {
                Some(s) => s.end = i,
                None => open = Some(Span::new(i, i)),
            },
            _ => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    Ok(spans)
}

fn parse_tagged_row(
    words: &[String],
    aspect_col: &str,
    opinion_col: &str,
) -> std::result::Result<RowResult, String> {
    let aspects = tagged_spans(words, aspect_col)?;
    let aspect = match aspects.as_slice() {
        [a] => *a,
        [] => return Ok(Err(RejectReason::AspectNotFound)),
        _ => {
            return Ok(Err(RejectReason::Invalid(
                "more than one target span in a row".into(),
            )))
        }
    };
    let opinions = if opinion_col.is_empty() {
        Vec::new()
    } else {
        tagged_spans(words, opinion_col)?
    };
    Ok(Ok((aspect, opinions)))
}
