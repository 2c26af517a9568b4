use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, Strategy as PropStrategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::Domain;

const APPLE: &str = "Works well , and I am extremely happy to be back to an apple OS .";

fn words(text: &str) -> Vec<String> {
    text.split(' ').map(String::from).collect()
}

fn apple_group() -> Vec<RawInstance> {
    let w = words(APPLE);
    vec![
        RawInstance::new("apple#0", w.clone(), Span::new(0, 0), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Positive)
            .with_opinions(vec![Span::new(1, 1)]),
        RawInstance::new("apple#1", w, Span::new(13, 14), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Positive)
            .with_opinions(vec![Span::new(7, 7)]),
    ]
}

fn refs(v: &[RawInstance]) -> Vec<&RawInstance> {
    v.iter().collect()
}

fn apple_pool() -> DistractorPool {
    let train = vec![
        RawInstance::new("t#0", words("Overall , games being the main issue ."), Span::new(2, 2), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Negative)
            .with_opinions(vec![Span::new(6, 6)]),
        RawInstance::new(
            "t2#0",
            words("But the video chat is the only thing that is iffy about it ."),
            Span::new(2, 3),
            Domain::Laptop,
        )
        .unwrap()
        .with_polarity(Polarity::Negative)
        .with_opinions(vec![Span::new(10, 10)]),
    ];
    build_distractor_pool(&train, &Lexicon::seed())
}

#[test]
fn reverses_target_with_conjunction_flip() {
    let g = apple_group();
    let v = rev_tgt(&refs(&g), "apple#0", &Lexicon::seed()).unwrap();
    assert_eq!(v.sentence(), "Works badly , but I am extremely happy to be back to an apple OS .");
    assert_eq!(v.target.polarity, Some(Polarity::Negative));
    assert_eq!(v.target.span_text(v.target.opinions.as_ref().unwrap()[0]), "badly");
    assert_eq!(v.target.id, "apple#0~REVTGT#0");
    assert_eq!(v.others[0].polarity, Some(Polarity::Positive));
    assert_eq!(v.others[0].aspect_text, "apple OS");
}

#[test]
fn reverses_non_targets() {
    let g = apple_group();
    let v = rev_non(&refs(&g), "apple#0", &Lexicon::seed()).unwrap();
    assert_eq!(v.sentence(), "Works well , but I am extremely unhappy to be back to an apple OS .");
    assert_eq!(v.target.polarity, Some(Polarity::Positive));
    assert_eq!(v.target.span_text(v.target.opinions.as_ref().unwrap()[0]), "well");
    let other = &v.others[0];
    assert_eq!(other.polarity, Some(Polarity::Negative));
    assert_eq!(other.span_text(other.opinions.as_ref().unwrap()[0]), "unhappy");
}

#[test]
fn appends_opposite_distractors() {
    let g = apple_group();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pool = apple_pool();
    let v = add_diff(&refs(&g), "apple#0", &pool, 2, &ClauseTemplates::default(), &Lexicon::seed(), &mut rng).unwrap();
    assert_eq!(
        v.sentence(),
        "Works well , and I am extremely happy to be back to an apple OS , but games being the main issue . \
         And the video chat is the only thing that is iffy about it ."
    );
    assert_eq!(v.target.polarity, Some(Polarity::Positive));
    assert_eq!(v.target.opinions, g[0].opinions);
    assert_eq!(v.shortfall, 0);
    let appended: Vec<_> = v.others[1..].iter().map(|i| (i.aspect_text.clone(), i.polarity)).collect();
    assert_eq!(
        appended,
        vec![("games".to_string(), Some(Polarity::Negative)), ("video chat".to_string(), Some(Polarity::Negative))]
    );
    assert_eq!(v.others[2].span_text(v.others[2].opinions.as_ref().unwrap()[0]), "iffy");
}

#[test]
fn add_diff_edge_cases() {
    let g = apple_group();
    let lex = Lexicon::seed();
    let pool = apple_pool();
    let t = ClauseTemplates::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let none = add_diff(&refs(&g), "apple#0", &pool, 0, &t, &lex, &mut rng).unwrap();
    assert_eq!(none.target.words, g[0].words);
    assert_eq!(none.strategy, Strategy::AddDiff);
    let short = add_diff(&refs(&g), "apple#0", &pool, 2, &t, &lex, &mut rng).unwrap();
    assert_eq!(short.shortfall, 0);
    let tiny = DistractorPool { entries: pool.entries[..1].to_vec(), dropped: 0 };
    let short = add_diff(&refs(&g), "apple#0", &tiny, 2, &t, &lex, &mut rng).unwrap();
    assert_eq!(short.shortfall, 1);
    assert_eq!(short.others.len(), 2);
    let run = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        add_diff(&refs(&g), "apple#0", &pool, 1, &t, &lex, &mut r).unwrap()
    };
    assert_eq!(run(5), run(5));
}

#[test]
fn negator_fallback_covers_both_words() {
    let mut lex = Lexicon::empty();
    lex.add_pair("good", "bad", Polarity::Positive).unwrap();
    let inst = RawInstance::new("f#0", words("the food is tasty"), Span::new(1, 1), Domain::Restaurant)
        .unwrap()
        .with_polarity(Polarity::Positive)
        .with_opinions(vec![Span::new(3, 3)]);
    let v = rev_tgt(&[&inst], "f#0", &lex).unwrap();
    assert_eq!(v.sentence(), "the food is not tasty");
    assert_eq!(v.target.opinions, Some(vec![Span::new(3, 4)]));
    assert_eq!(v.target.polarity, Some(Polarity::Negative));
}

#[test]
fn single_aspect_cases() {
    let lex = Lexicon::seed();
    let inst = RawInstance::new("s#0", words("the screen is good and bright"), Span::new(1, 1), Domain::Laptop)
        .unwrap()
        .with_polarity(Polarity::Positive)
        .with_opinions(vec![Span::new(3, 3)]);
    let v = rev_tgt(&[&inst], "s#0", &lex).unwrap();
    assert_eq!(v.sentence(), "the screen is bad and bright");
    assert_eq!(rev_non(&[&inst], "s#0", &lex).unwrap_err(), SkipReason::NoSameSentimentNonTarget);
    let neutral = inst.clone().with_polarity(Polarity::Neutral);
    assert_eq!(rev_tgt(&[&neutral], "s#0", &lex).unwrap_err(), SkipReason::NeutralTarget);
}

#[test]
fn sentiment_only_instances_locate_opinions() {
    let lex = Lexicon::seed();
    let w = words("the pasta was great and the staff were friendly");
    let a = RawInstance::new("x#0", w.clone(), Span::new(1, 1), Domain::Restaurant).unwrap().with_polarity(Polarity::Positive);
    let b = RawInstance::new("x#1", w, Span::new(6, 6), Domain::Restaurant).unwrap().with_polarity(Polarity::Positive);
    let v = rev_tgt(&[&a, &b], "x#0", &lex).unwrap();
    assert_eq!(v.sentence(), "the pasta was terrible but the staff were friendly");
    assert_eq!(v.target.opinions, None);
    let v = rev_non(&[&a, &b], "x#0", &lex).unwrap();
    assert_eq!(v.sentence(), "the pasta was great but the staff were unfriendly");
    assert_eq!(v.others[0].polarity, Some(Polarity::Negative));
}

#[test]
fn generation_emits_sources_and_variants() {
    let g = apple_group();
    let pool_train: Vec<RawInstance> = vec![
        RawInstance::new("t#0", words("the battery is awful"), Span::new(1, 1), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Negative)
            .with_opinions(vec![Span::new(3, 3)]),
    ];
    let gen = generate_arts_oe(&g, &pool_train, &Lexicon::seed(), &GenerationConfig::default());
    let m = &gen.manifest;
    assert_eq!(m.targets[&Strategy::Source], 2);
    assert_eq!(m.targets[&Strategy::RevTgt], 2);
    assert_eq!(m.targets[&Strategy::RevNon], 2);
    assert_eq!(m.targets[&Strategy::AddDiff], 2);
    assert_eq!(m.add_diff_shortfall, 2);
    assert_eq!(m.total_excluding_source, 6);
    assert_eq!(m.total_including_source, 8);
    assert!(gen.instances.iter().all(|a| a.instance.origin == Origin::Adversarial));
    assert_eq!(gen.targets().count(), 8);
    assert_eq!(gen.instances[0].instance.id, "apple~SOURCE#0");

    let again = generate_arts_oe(&g, &pool_train, &Lexicon::seed(), &GenerationConfig::default());
    assert_eq!(gen.instances, again.instances);

    let text = to_adversarial_string(&gen.instances);
    assert_eq!(from_adversarial_str(&text).unwrap(), gen.instances);
    let plain = crate::corpus::to_jsonl_string(&g);
    assert!(from_adversarial_str(&plain).is_err());

    let empty = generate_arts_oe(&[], &[], &Lexicon::seed(), &GenerationConfig::default());
    assert!(empty.instances.is_empty());
}

fn arb_group() -> impl PropStrategy<Value = Vec<RawInstance>> {
    let opinion = prop::sample::select(vec!["good", "bad", "tasty", "slow", "not great", "happy"]);
    let aspect = prop::sample::select(vec!["food", "staff", "price", "screen"]);
    let conj = prop::sample::select(vec!["and", "but", ","]);
    prop::collection::vec((aspect, opinion, conj, any::<bool>()), 1..4).prop_map(|parts| {
        let mut w: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for (i, (asp, op, conj, pos)) in parts.iter().enumerate() {
            if i > 0 {
                w.push(conj.to_string());
            }
            w.push("the".into());
            let a = w.len();
            w.push(format!("{asp}{i}"));
            w.push("is".into());
            let o = w.len();
            w.extend(op.split(' ').map(String::from));
            spans.push((a, Span::new(o, w.len() - 1), *pos));
        }
        w.push(".".into());
        spans
            .into_iter()
            .enumerate()
            .map(|(k, (a, o, pos))| {
                RawInstance::new(format!("g#{k}"), w.clone(), Span::new(a, a), Domain::Restaurant)
                    .unwrap()
                    .with_polarity(if pos { Polarity::Positive } else { Polarity::Negative })
                    .with_opinions(vec![o])
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn variants_keep_targets_and_valid_spans(group in arb_group(), seed in 0u64..100) {
        let lex = Lexicon::seed();
        let cfg = GenerationConfig { seed, ..Default::default() };
        let gen = generate_arts_oe(&group, &group, &lex, &cfg);
        prop_assert!(gen.manifest.dropped.is_empty(), "{:?}", gen.manifest.dropped);
        for a in &gen.instances {
            prop_assert!(a.instance.validate().is_ok());
            if !a.is_target() {
                continue;
            }
            let src = group.iter().find(|i| i.id == a.parent_id).unwrap();
            prop_assert_eq!(&a.instance.aspect_text, &src.aspect_text);
            match a.strategy {
                Strategy::RevTgt => prop_assert_eq!(a.instance.polarity, src.polarity.and_then(|p| p.reversed())),
                Strategy::RevNon | Strategy::AddDiff => {
                    prop_assert_eq!(a.instance.polarity, src.polarity);
                    let texts = |i: &RawInstance| i.opinions.as_ref().unwrap().iter().map(|s| i.span_text(*s)).collect::<Vec<_>>();
                    prop_assert_eq!(texts(&a.instance), texts(src));
                }
                Strategy::Source => prop_assert_eq!(&a.instance.words, &src.words),
            }
        }
    }
}
