/// A word cut from raw text, with its character (not byte) offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordToken {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

// Punctuation kept inside a word when both neighbours are alphanumeric:
// "don't", "e-mail", "3.5", "1,000", "24/7".
const INNER: &[char] = &['\'', '-', '.', ',', '/', ':', '&'];

/// Splits on whitespace and detaches punctuation as separate words, so
/// `"bad!"` becomes `["bad", "!"]`.
pub fn split_words(text: &str) -> Vec<WordToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;

    let flush = |cur: &mut String, start: usize, end: usize, out: &mut Vec<WordToken>| {
        if !cur.is_empty() {
            out.push(WordToken {
                text: std::mem::take(cur),
                char_start: start,
                char_end: end,
            });
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut cur, cur_start, i, &mut out);
            continue;
        }
        if c.is_alphanumeric() {
            if cur.is_empty() {
                cur_start = i;
            }
            cur.push(c);
            continue;
        }
        let inner = INNER.contains(&c)
            && !cur.is_empty()
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if inner {
            cur.push(c);
            continue;
        }
        flush(&mut cur, cur_start, i, &mut out);
        out.push(WordToken {
            text: c.to_string(),
            char_start: i,
            char_end: i + 1,
        });
    }
    flush(&mut cur, cur_start, chars.len(), &mut out);
    out
}
