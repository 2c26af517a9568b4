//! Acceptance suite. Prints one `PASS`, `FAIL` or `SKIP` line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Criteria that need external data read their paths from the environment:
//! `ASPECT_CTX_SEM_LAP_TRAIN` (laptop review XML) and
//! `ASPECT_CTX_TOWE_LAP_TRAIN` (laptop opinion-span TSV).

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aspect_ctx::advgen::{
    add_diff, build_distractor_pool, generate_arts_oe, rev_non, rev_tgt, ClauseTemplates, GenerationConfig, Lexicon,
    Strategy,
};
use aspect_ctx::corpus::{
    compute_stats, split_dev_sc, Domain, Polarity, RawInstance, Span, Task,
};
use aspect_ctx::encoder::{Encoder, SpecialTokens, TinyConfig, TinyEncoder, TokenizerHandle};
use aspect_ctx::evaluator::{evaluate, oe_span_f1, sc_metrics, OeAggregation};
use aspect_ctx::model::{induce_aspect_feature, loss, AspectModel, HeadConfig, OeFeatureMode, Prediction};
use aspect_ctx::trainer::{
    load_dataset, train_one, DataFormat, DatasetConfig, Prepared, RunConfig, TrainSettings,
};
use aspect_ctx::transform::{align_oe_labels, apply, project_predictions, Region, TransformConfig, TransformKind};
use aspect_ctx::{encoder::EncoderOutput, synthetic};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE_SIZE: usize = 500;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const OVERFIT_BUDGET: Duration = Duration::from_secs(60);
const OVERFIT_EPOCHS: usize = 200;
const FD_REL_TOL: f64 = 1e-3;
const INDUCTION_TOL: f64 = 1e-9;
const UNIFORM_LOSS_TOL: f64 = 1e-6;
const SC_EXAMPLE_TOL: f64 = 1e-9;
const UPTICK_SHARE: f64 = 0.05;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const WORDS: [&str; 24] = [
    "the", "battery", "life", "is", "incredibly", "long", "but", "screen", "was", "not", "bright", "enough",
    "and", "keyboard", "feels", "cheap", "customer", "service", "rude", "waiters", "pasta", "delicious", ",", "!",
];

/// Random sentences with multi-word aspects and one or two multi-word
/// opinion spans that avoid the aspect and each other.
fn fixture_corpus(n: usize, seed: u64) -> Vec<RawInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let len = rng.random_range(4..=18);
        let mut words: Vec<String> = (0..len).map(|_| WORDS.choose(&mut rng).unwrap().to_string()).collect();
        words.push(".".into());
        let a_len = rng.random_range(1..=3);
        let a_start = rng.random_range(0..len - a_len + 1);
        let aspect = Span::new(a_start, a_start + a_len - 1);
        let mut opinions: Vec<Span> = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let o_len = rng.random_range(1..=2);
            let o_start = rng.random_range(0..len - o_len + 1);
            let s = Span::new(o_start, o_start + o_len - 1);
            if !s.overlaps(&aspect) && opinions.iter().all(|o| !o.overlaps(&s)) {
                opinions.push(s);
            }
        }
        if opinions.is_empty() {
            continue;
        }
        let polarity = Polarity::ALL[rng.random_range(0..3)];
        let inst = RawInstance::new(format!("fx{}#0", out.len()), words, aspect, Domain::Laptop)
            .unwrap()
            .with_polarity(polarity)
            .with_opinions(opinions);
        if inst.validate_for(Task::Oe).is_ok() && inst.validate_for(Task::Sc).is_ok() {
            out.push(inst);
        }
    }
    out
}

/// Whole-word and character-level vocabularies, both with markers.
fn tokenizers(corpus: &[RawInstance]) -> Vec<(&'static str, TokenizerHandle)> {
    let words = || corpus.iter().flat_map(|i| i.words.iter().map(String::as_str)).chain(["target", "aspect"]);
    let whole = TokenizerHandle::build_from_words(words(), 1, SpecialTokens::default(), false).unwrap();
    let chars = TokenizerHandle::build_from_words(words(), usize::MAX, SpecialTokens::default(), false).unwrap();
    vec![
        ("whole-word", whole.register_markers().unwrap()),
        ("character", chars.register_markers().unwrap()),
    ]
}

fn transformation_round_trip() -> Outcome {
    let started = Instant::now();
    let corpus = fixture_corpus(FIXTURE_SIZE, 1);
    let cfg = TransformConfig { max_sequence_length: 512, ..Default::default() };
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, tok) in tokenizers(&corpus) {
        for inst in &corpus {
            let mut lens = std::collections::HashMap::new();
            for kind in TransformKind::ALL {
                let ti = apply(kind, inst, &tok, &cfg).unwrap();
                checked += 1;
                lens.insert(kind, ti.len());
                if ti.is_truncated() || ti.reconstruct_words() != inst.words {
                    failures.push(format!("{name} {kind} {}: words differ", inst.id));
                }
                let covered: BTreeSet<usize> =
                    (ti.aspect_first..=ti.aspect_last).filter_map(|i| ti.word_of[i]).collect();
                let expected: BTreeSet<usize> = (inst.aspect.start..=inst.aspect.end).collect();
                let in_sentence = (ti.aspect_first..=ti.aspect_last).all(|i| ti.region_of[i] == Region::Sentence);
                let first_piece = ti.aspect_first == 0 || ti.word_of[ti.aspect_first - 1] != Some(inst.aspect.start);
                let last_piece = ti.word_of.get(ti.aspect_last + 1).copied().flatten() != Some(inst.aspect.end);
                if covered != expected || !in_sentence || !first_piece || !last_piece {
                    failures.push(format!("{name} {kind} {}: aspect range", inst.id));
                }
                if kind == TransformKind::Am
                    && (ti.subtokens[ti.aspect_first - 1] != "<asp>" || ti.subtokens[ti.aspect_last + 1] != "</asp>")
                {
                    failures.push(format!("{name} AM {}: markers misplaced", inst.id));
                }
            }
            if lens[&TransformKind::Am] != lens[&TransformKind::Ag] + 2 {
                failures.push(format!("{name} {}: AM length {} vs AG {}", inst.id, lens[&TransformKind::Am], lens[&TransformKind::Ag]));
            }
        }
    }
    let elapsed = started.elapsed();
    check(
        failures.is_empty() && elapsed < ROUND_TRIP_BUDGET,
        format!(
            "{checked} transformed inputs, {} violations, {:.2}s (budget {}s){}",
            failures.len(),
            elapsed.as_secs_f64(),
            ROUND_TRIP_BUDGET.as_secs(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn sorted(spans: &[Span]) -> Vec<Span> {
    let set: BTreeSet<Span> = spans.iter().copied().collect();
    set.into_iter().collect()
}

fn alignment_identity() -> Outcome {
    let corpus = fixture_corpus(FIXTURE_SIZE, 2);
    let adv_source = synthetic::corpus(60, 21, Domain::Laptop);
    let adv_train = synthetic::corpus(120, 22, Domain::Laptop);
    let generation = generate_arts_oe(&adv_source, &adv_train, &Lexicon::seed(), &GenerationConfig::default());
    let adversarial: Vec<RawInstance> = generation.instances.iter().map(|a| a.instance.clone()).collect();
    let cfg = TransformConfig::default();
    let mut total = 0;
    let mut truncated = 0;
    let mut mismatches = Vec::new();
    for (set, insts) in [("fixture", &corpus), ("adversarial", &adversarial)] {
        for (name, tok) in tokenizers(insts) {
            for inst in insts.iter() {
                for kind in TransformKind::ALL {
                    let ti = match apply(kind, inst, &tok, &cfg) {
                        Ok(ti) => ti,
                        Err(aspect_ctx::Error::AspectTruncated { .. }) => {
                            truncated += 1;
                            continue;
                        }
                        Err(e) => panic!("{e}"),
                    };
                    let tags = align_oe_labels(inst, &ti).unwrap();
                    if tags.unscoreable || ti.is_truncated() {
                        truncated += 1;
                        continue;
                    }
                    total += 1;
                    let back = sorted(&project_predictions(&ti, &tags.labels));
                    if back != sorted(inst.opinions.as_ref().unwrap()) {
                        mismatches.push(format!("{set} {name} {kind} {}", inst.id));
                    }
                }
            }
        }
    }
    check(
        mismatches.is_empty() && total > 0 && !adversarial.is_empty(),
        format!(
            "{} of {total} untruncated inputs recover their gold spans ({} adversarial instances, {truncated} truncated skipped){}",
            total - mismatches.len(),
            adversarial.len(),
            mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    )
}

fn brute_force_f1(preds: &[Vec<Span>], golds: &[Vec<Span>]) -> (f64, f64, f64) {
    let (mut matched, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        let mut p_unique: Vec<Span> = Vec::new();
        for s in p {
            if !p_unique.contains(s) {
                p_unique.push(*s);
            }
        }
        let mut g_unique: Vec<Span> = Vec::new();
        for s in g {
            if !g_unique.contains(s) {
                g_unique.push(*s);
            }
        }
        n_pred += p_unique.len();
        n_gold += g_unique.len();
        matched += p_unique.iter().filter(|a| g_unique.iter().any(|b| a.start == b.start && a.end == b.end)).count();
    }
    let p = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
    let r = if n_gold == 0 { 0.0 } else { matched as f64 / n_gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spans = |rng: &mut ChaCha8Rng| -> Vec<Span> {
        (0..rng.random_range(0..4))
            .map(|_| {
                let s = rng.random_range(0..12);
                Span::new(s, s + rng.random_range(0..3))
            })
            .collect()
    };
    let golds: Vec<Vec<Span>> = (0..200).map(|_| spans(&mut rng)).collect();
    let preds: Vec<Vec<Span>> = golds
        .iter()
        .map(|g| if rng.random_bool(0.4) { g.clone() } else { spans(&mut rng) })
        .collect();
    let m = oe_span_f1(&preds, &golds).unwrap();
    let got = (m.precision.unwrap(), m.recall.unwrap(), m.f1.unwrap());
    let want = brute_force_f1(&preds, &golds);

    use Polarity::{Negative, Positive};
    let sc = sc_metrics(&[Positive, Negative, Negative], &[Positive, Positive, Negative]).unwrap();
    let (acc, mf1) = (sc.accuracy.unwrap(), sc.macro_f1.unwrap());
    let sc_ok = (acc - 2.0 / 3.0).abs() <= SC_EXAMPLE_TOL && (mf1 - 4.0 / 9.0).abs() <= SC_EXAMPLE_TOL;
    check(
        got == want && sc_ok,
        format!(
            "span P/R/F1 {:.6}/{:.6}/{:.6} vs brute force {:.6}/{:.6}/{:.6}; accuracy {acc:.12}, macro-F1 {mf1:.12}",
            got.0, got.1, got.2, want.0, want.1, want.2
        ),
    )
}

/// Cross-entropy of the model's prediction, recomputed from scratch.
fn model_loss(model: &AspectModel<TinyEncoder>, ti: &aspect_ctx::transform::TransformedInput, gold: &[Option<usize>]) -> f64 {
    loss(&model.predict(ti).unwrap(), gold, 0.0, 0.0).unwrap()
}

fn analytic_gradients(
    model: &mut AspectModel<TinyEncoder>,
    ti: &aspect_ctx::transform::TransformedInput,
    gold: &[Option<usize>],
) -> (Array2<f64>, Array2<f64>) {
    model.zero_grad();
    let x = model.encoder.embed(ti).unwrap();
    let (pred, trace) = model.forward_embedded(ti, x.clone(), None).unwrap();
    let n = gold.iter().flatten().count() as f64;
    let mut d = pred.probs.clone();
    for (mut row, g) in d.rows_mut().into_iter().zip(gold) {
        match g {
            Some(g) => {
                row[*g] -= 1.0;
                row /= n;
            }
            None => row.fill(0.0),
        }
    }
    let d_inputs = model.backward(&trace, &d).unwrap();
    (x, d_inputs)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over the input embeddings and a sample of every parameter matrix.
fn gradient_check(task: Task, kind: TransformKind, seed: u64) -> f64 {
    let corpus = synthetic::contrastive(2, seed, Domain::Restaurant);
    let inst = &corpus[0];
    let words = corpus.iter().flat_map(|i| i.words.iter().map(String::as_str));
    let tok = TokenizerHandle::build_from_words(words, 1, SpecialTokens::default(), false)
        .unwrap()
        .register_markers()
        .unwrap();
    let ti = apply(kind, inst, &tok, &TransformConfig::default()).unwrap();
    let enc = TinyEncoder::new(seed, tok.vocab_size(), TinyConfig { width: 6, window: 1, max_positions: 64 });
    let mut head = HeadConfig::new(task, 6);
    head.dropout = 0.0;
    head.mlp_hidden = 5;
    if task == Task::Oe {
        head.oe_feature_mode = OeFeatureMode::Concat;
    }
    let mut model = AspectModel::new(enc, head, seed).unwrap();
    let gold = aspect_ctx::trainer::gold_targets(task, inst, &ti).unwrap();
    let (x, d_inputs) = analytic_gradients(&mut model, &ti, &gold);
    let h = 1e-6;
    let mut worst: f64 = 0.0;

    let embedded_loss = |m: &AspectModel<TinyEncoder>, x: Array2<f64>| {
        let (pred, _) = m.forward_embedded(&ti, x, None).unwrap();
        loss(&pred, &gold, 0.0, 0.0).unwrap()
    };
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut plus = x.clone();
            plus[[i, j]] += h;
            let mut minus = x.clone();
            minus[[i, j]] -= h;
            let fd = (embedded_loss(&model, plus) - embedded_loss(&model, minus)) / (2.0 * h);
            worst = worst.max(rel_err(fd, d_inputs[[i, j]]));
        }
    }

    let grads: Vec<Array2<f64>> = model.params().iter().map(|p| p.grad().cloned().unwrap_or_else(|| Array2::zeros(p.value.raw_dim()))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, g) in grads.iter().enumerate() {
        let (rows, cols) = g.dim();
        let argmax = g.indexed_iter().fold(((0, 0), 0.0f64), |b, (ix, v)| if v.abs() > b.1 { (ix, v.abs()) } else { b }).0;
        let mut picks = vec![argmax];
        picks.extend((0..4).map(|_| (rng.random_range(0..rows), rng.random_range(0..cols))));
        for (r, c) in picks {
            let mut plus = model.clone();
            plus.params_mut()[k].value[[r, c]] += h;
            let mut minus = model.clone();
            minus.params_mut()[k].value[[r, c]] -= h;
            let fd = (model_loss(&plus, &ti, &gold) - model_loss(&minus, &ti, &gold)) / (2.0 * h);
            worst = worst.max(rel_err(fd, g[[r, c]]));
        }
    }
    worst
}

fn induction_and_loss() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut induction_err: f64 = 0.0;
    for _ in 0..50 {
        let len = rng.random_range(1..20);
        let width = rng.random_range(1..16);
        let hidden = Array2::from_shape_fn((len, width), |_| rng.random_range(-3.0..3.0));
        let first = rng.random_range(0..len);
        let last = rng.random_range(first..len);
        let f = induce_aspect_feature(&EncoderOutput { hidden: hidden.clone() }, first, last).unwrap();
        for j in 0..width {
            let want = (hidden[[first, j]] + hidden[[last, j]]) / 2.0;
            induction_err = induction_err.max((f[j] - want).abs());
        }
    }
    let uniform = Prediction::from_logits(Array2::zeros((1, 3)));
    let uniform_loss = loss(&uniform, &[Some(1)], 0.0, 0.0).unwrap();
    let uniform_err = (uniform_loss - 3f64.ln()).abs();
    let cases = [
        (Task::Sc, TransformKind::Am),
        (Task::Sc, TransformKind::Ag),
        (Task::Oe, TransformKind::Ac),
        (Task::Oe, TransformKind::Ap),
    ];
    let fd_worst = cases.iter().enumerate().map(|(i, &(t, k))| gradient_check(t, k, 10 + i as u64)).fold(0.0, f64::max);
    check(
        induction_err <= INDUCTION_TOL && uniform_err <= UNIFORM_LOSS_TOL && fd_worst <= FD_REL_TOL,
        format!(
            "induction max error {induction_err:.1e}; uniform loss - ln 3 = {uniform_err:.1e}; worst gradient relative error {fd_worst:.1e} (tol {FD_REL_TOL:.0e})"
        ),
    )
}

fn overfit_config() -> RunConfig {
    RunConfig {
        run_id: "overfit".into(),
        transform: TransformKind::Am,
        dataset: DatasetConfig {
            name: "contrastive".into(),
            task: Task::Sc,
            domain: Domain::Restaurant,
            format: DataFormat::Jsonl,
            train: PathBuf::from("in-memory"),
            dev: None,
            test: None,
            adversarial: None,
            dev_size: 0,
            dev_fraction: 0.0,
            split_seed: 0,
        },
        train: TrainSettings {
            learning_rate: Some(1e-3),
            batch_size: 16,
            epochs: OVERFIT_EPOCHS,
            patience: None,
            seeds: vec![1],
            tiny: TinyConfig { width: 32, ..Default::default() },
            ..Default::default()
        },
    }
}

fn trainer_sanity() -> Outcome {
    let train = synthetic::contrastive(16, 5, Domain::Restaurant);
    let data = Prepared { train: train.clone(), dev: train.clone(), ..Default::default() };
    let mut cfg = overfit_config();
    cfg.train.head.dropout = 0.0;
    let started = Instant::now();
    let (first, ckpt) = train_one(&cfg, &data, 1).unwrap();
    let elapsed = started.elapsed();
    let (second, _) = train_one(&cfg, &data, 1).unwrap();
    let bitwise = first.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>()
        == second.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    let accuracy = evaluate(&ckpt.predictor(), &train, OeAggregation::Micro).unwrap().metrics.accuracy.unwrap();
    let losses = first.losses();
    let upticks = losses.windows(2).skip(1).filter(|w| w[1] > w[0]).count();
    let uptick_share = upticks as f64 / (losses.len().saturating_sub(2)).max(1) as f64;
    check(
        accuracy == 1.0 && elapsed < OVERFIT_BUDGET && bitwise && uptick_share <= UPTICK_SHARE,
        format!(
            "train accuracy {:.3} (best epoch {} of {}), {:.2}s per run (budget {}s), histories bit-identical: {bitwise}, loss upticks {upticks} ({:.1}% of epochs, limit {:.0}%), final loss {:.2e}",
            accuracy,
            first.best_epoch,
            OVERFIT_EPOCHS,
            elapsed.as_secs_f64(),
            OVERFIT_BUDGET.as_secs(),
            100.0 * uptick_share,
            100.0 * UPTICK_SHARE,
            losses.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

const APPLE: &str = "Works well , and I am extremely happy to be back to an apple OS .";

fn words(text: &str) -> Vec<String> {
    text.split(' ').map(String::from).collect()
}

fn verbatim_examples() -> Vec<String> {
    let w = words(APPLE);
    let group = [
        RawInstance::new("apple#0", w.clone(), Span::new(0, 0), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Positive)
            .with_opinions(vec![Span::new(1, 1)]),
        RawInstance::new("apple#1", w, Span::new(13, 14), Domain::Laptop)
            .unwrap()
            .with_polarity(Polarity::Positive)
            .with_opinions(vec![Span::new(7, 7)]),
    ];
    let refs: Vec<&RawInstance> = group.iter().collect();
    let lex = Lexicon::seed();
    let train = [
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
    let pool = build_distractor_pool(&train, &lex);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let expected = [
        "Works badly , but I am extremely happy to be back to an apple OS .",
        "Works well , but I am extremely unhappy to be back to an apple OS .",
        "Works well , and I am extremely happy to be back to an apple OS , but games being the main issue . \
         And the video chat is the only thing that is iffy about it .",
    ];
    let produced = [
        rev_tgt(&refs, "apple#0", &lex).map(|v| v.sentence()),
        rev_non(&refs, "apple#0", &lex).map(|v| v.sentence()),
        add_diff(&refs, "apple#0", &pool, 2, &ClauseTemplates::default(), &lex, &mut rng).map(|v| v.sentence()),
    ];
    let mut problems = Vec::new();
    for (want, got) in expected.iter().zip(produced) {
        match got {
            Ok(s) if s == *want => {}
            Ok(s) => problems.push(format!("got {s:?}")),
            Err(r) => problems.push(format!("skipped: {}", r.label())),
        }
    }
    problems
}

fn opinion_texts(inst: &RawInstance) -> Vec<String> {
    inst.opinions.iter().flatten().map(|s| inst.span_text(*s)).collect()
}

fn generator_contracts() -> Outcome {
    let test = synthetic::corpus(50, 31, Domain::Laptop);
    let train = synthetic::corpus(200, 32, Domain::Laptop);
    let generation = generate_arts_oe(&test, &train, &Lexicon::seed(), &GenerationConfig { seed: 7, ..Default::default() });
    let parents: BTreeMap<&str, &RawInstance> = test.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut violations = Vec::new();
    let mut per_strategy: BTreeMap<Strategy, usize> = BTreeMap::new();
    for adv in &generation.instances {
        if let Err(r) = adv.instance.validate_for(Task::Oe).and(adv.instance.validate_for(Task::Sc)) {
            violations.push(format!("{}: {r}", adv.instance.id));
        }
        if !adv.is_target() {
            continue;
        }
        *per_strategy.entry(adv.strategy).or_default() += 1;
        let parent = parents[adv.parent_id.as_str()];
        let inst = &adv.instance;
        let ok = match adv.strategy {
            Strategy::RevTgt => matches!(
                (parent.polarity, inst.polarity),
                (Some(Polarity::Positive), Some(Polarity::Negative)) | (Some(Polarity::Negative), Some(Polarity::Positive))
            ),
            Strategy::RevNon | Strategy::AddDiff | Strategy::Source => {
                inst.polarity == parent.polarity
                    && inst.aspect_text == parent.aspect_text
                    && opinion_texts(inst) == opinion_texts(parent)
            }
        };
        if !ok {
            violations.push(format!("{} from {}", inst.id, parent.id));
        }
    }
    let verbatim = verbatim_examples();
    let all_strategies = [Strategy::RevTgt, Strategy::RevNon, Strategy::AddDiff].iter().all(|s| per_strategy.contains_key(s));
    check(
        violations.is_empty() && verbatim.is_empty() && all_strategies,
        format!(
            "{} records, targets {:?}, {} contract violations, {} of 3 appendix examples verbatim{}",
            generation.instances.len(),
            per_strategy.iter().map(|(s, n)| format!("{s}={n}")).collect::<Vec<_>>(),
            violations.len(),
            3 - verbatim.len(),
            violations.first().or(verbatim.first()).map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

const SC_TRAIN_PLUS_DEV: [usize; 3] = [930 + 57, 433 + 27, 800 + 66];
const OE_TRAIN: (usize, usize) = (1158, 1634);

fn ingestion_counts() -> Outcome {
    let sc = std::env::var_os("ASPECT_CTX_SEM_LAP_TRAIN").map(PathBuf::from);
    let oe = std::env::var_os("ASPECT_CTX_TOWE_LAP_TRAIN").map(PathBuf::from);
    if sc.is_none() && oe.is_none() {
        return Outcome::Skip(
            "original dataset files not available; set ASPECT_CTX_SEM_LAP_TRAIN and/or ASPECT_CTX_TOWE_LAP_TRAIN".into(),
        );
    }
    let mut details = Vec::new();
    let mut ok = true;
    if let Some(path) = sc {
        let loaded = load_dataset(&path, DataFormat::SemevalXml, Task::Sc, Domain::Laptop).unwrap();
        let counts = compute_stats(&loaded.instances).polarity_counts();
        let rejected = loaded.rejections.len();
        let diff: usize = counts.iter().zip(SC_TRAIN_PLUS_DEV).map(|(a, b)| a.abs_diff(b)).sum();
        let (train, dev) = split_dev_sc(&loaded.instances, 150, 0).unwrap();
        ok &= diff <= rejected && dev.len() == 150 && train.len() + dev.len() == loaded.instances.len();
        details.push(format!(
            "SC train+dev {counts:?} vs {SC_TRAIN_PLUS_DEV:?} (|diff| {diff} within {rejected} rejections {:?}), dev {} {:?}",
            loaded.rejection_counts(),
            dev.len(),
            compute_stats(&dev).polarity_counts()
        ));
    }
    if let Some(path) = oe {
        let loaded = load_dataset(&path, DataFormat::ToweTsv, Task::Oe, Domain::Laptop).unwrap();
        let stats = compute_stats(&loaded.instances);
        let rejected = loaded.rejections.len();
        let diff = stats.n_aspects.abs_diff(OE_TRAIN.1);
        ok &= diff <= rejected && stats.n_sentences.abs_diff(OE_TRAIN.0) <= rejected;
        details.push(format!("OE {stats} vs sentences={} aspects={} ({rejected} rejections)", OE_TRAIN.0, OE_TRAIN.1));
    }
    check(ok, details.join("; "))
}

fn ablation_direction() -> Outcome {
    Outcome::Skip(
        "needs a pretrained encoder and GPU; this build ships only the tiny encoder (pretrained backends return Unsupported)"
            .into(),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("transformation round-trip", transformation_round_trip),
        ("label alignment identity", alignment_identity),
        ("metric oracles", metric_oracles),
        ("feature induction, loss and gradients", induction_and_loss),
        ("trainer sanity", trainer_sanity),
        ("adversarial generator contracts", generator_contracts),
        ("ingestion counts", ingestion_counts),
        ("ablation direction", ablation_direction),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
