//! Fixtures shared by unit tests.

use crate::corpus::{Domain, RawInstance, Span};
use crate::encoder::{SpecialTokens, TokenizerHandle};

pub const FIGURE_SENTENCE: &str = "The food is tasty but the service is very bad !";

/// Vocabulary in which "tasty" splits as `ta ##sty`.
pub fn figure_tokenizer() -> TokenizerHandle {
    let vocab = [
        "[CLS]", "[SEP]", "[UNK]", "The", "the", "food", "is", "ta", "##sty", "but", "service",
        "very", "bad", "!", "target", "aspect",
    ];
    TokenizerHandle::from_vocab(
        vocab.iter().map(|s| s.to_string()).collect(),
        SpecialTokens::default(),
        false,
    )
    .unwrap()
}

pub fn sentence(text: &str, start: usize, end: usize) -> RawInstance {
    let words = text.split_whitespace().map(String::from).collect();
    RawInstance::new("fig#0", words, Span::new(start, end), Domain::Restaurant).unwrap()
}

pub fn figure_sentence(start: usize, end: usize) -> RawInstance {
    sentence(FIGURE_SENTENCE, start, end)
}
