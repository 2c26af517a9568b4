//! Seeded synthetic corpora for smoke runs and tests. Each sentence joins one
//! to three clauses "the <aspect> is <opinion>"; an aspect's polarity is that
//! of the opinion word in its own clause, and that word is its opinion span.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Domain, Polarity, RawInstance, Span};

pub const ASPECTS: [&str; 10] = [
    "battery", "screen", "keyboard", "price", "service", "food", "staff", "menu", "display", "speakers",
];
pub const POSITIVE: [&str; 4] = ["good", "great", "excellent", "nice"];
pub const NEGATIVE: [&str; 4] = ["bad", "awful", "terrible", "poor"];
pub const NEUTRAL: [&str; 2] = ["okay", "average"];

fn opinion_word(p: Polarity, rng: &mut ChaCha8Rng) -> &'static str {
    let pool: &[&str] = match p {
        Polarity::Positive => &POSITIVE,
        Polarity::Negative => &NEGATIVE,
        Polarity::Neutral => &NEUTRAL,
    };
    pool.choose(rng).expect("non-empty")
}

/// One sentence with `n_aspects` distinct aspects and explicit polarities.
pub fn sentence(id: &str, clauses: &[(&str, Polarity)], rng: &mut ChaCha8Rng, domain: Domain) -> Vec<RawInstance> {
    let mut words: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    for (k, (aspect, p)) in clauses.iter().enumerate() {
        if k > 0 {
            let joiner = match (clauses[k - 1].1 == *p, rng.random_bool(0.5)) {
                (true, _) => "and",
                (false, true) => "but",
                (false, false) => ",",
            };
            words.push(joiner.to_string());
        }
        words.push("the".into());
        let a = words.len();
        words.push(aspect.to_string());
        words.push("is".into());
        let o = words.len();
        words.push(opinion_word(*p, rng).to_string());
        spans.push((a, o, *p));
    }
    words.push(".".into());
    spans
        .into_iter()
        .enumerate()
        .map(|(k, (a, o, p))| {
            RawInstance::new(format!("{id}#{k}"), words.clone(), Span::new(a, a), domain)
                .expect("aspect in range")
                .with_polarity(p)
                .with_opinions(vec![Span::new(o, o)])
        })
        .collect()
}

/// `n_sentences` sentences labelled for both tasks.
pub fn corpus(n_sentences: usize, seed: u64, domain: Domain) -> Vec<RawInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0..n_sentences {
        let n = rng.random_range(1..=3);
        let aspects: Vec<&str> = ASPECTS.choose_multiple(&mut rng, n).copied().collect();
        let clauses: Vec<(&str, Polarity)> = aspects
            .into_iter()
            .map(|a| (a, Polarity::ALL[rng.random_range(0..3)]))
            .collect();
        out.extend(sentence(&format!("syn{seed}-{s}"), &clauses, &mut rng, domain));
    }
    out
}

/// At least `n_instances` instances from two-aspect sentences whose aspects
/// disagree, truncated to exactly `n_instances`.
pub fn contrastive(n_instances: usize, seed: u64, domain: Domain) -> Vec<RawInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut s = 0;
    while out.len() < n_instances {
        let aspects: Vec<&str> = ASPECTS.choose_multiple(&mut rng, 2).copied().collect();
        let first = Polarity::ALL[rng.random_range(0..3)];
        let second = Polarity::ALL[(first.index() + rng.random_range(1..3)) % 3];
        out.extend(sentence(&format!("con{seed}-{s}"), &[(aspects[0], first), (aspects[1], second)], &mut rng, domain));
        s += 1;
    }
    out.truncate(n_instances);
    out
}
