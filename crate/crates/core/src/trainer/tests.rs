use super::*;
use crate::corpus::Domain;
use crate::evaluator::render_seed_table;
use crate::synthetic;

fn run_config(transform: TransformKind, task: Task) -> RunConfig {
    RunConfig {
        run_id: "unit".into(),
        transform,
        dataset: DatasetConfig {
            name: "syn".into(),
            task,
            domain: Domain::Laptop,
            format: DataFormat::Jsonl,
            train: "unused".into(),
            dev: None,
            test: None,
            adversarial: None,
            dev_size: 0,
            dev_fraction: 0.0,
            split_seed: 0,
        },
        train: TrainSettings {
            learning_rate: Some(0.01),
            batch_size: 8,
            epochs: 3,
            patience: None,
            seeds: vec![7],
            tiny: crate::encoder::TinyConfig { width: 12, ..Default::default() },
            ..Default::default()
        },
    }
}

fn data(n: usize) -> Prepared {
    let all = synthetic::corpus(n, 4, Domain::Laptop);
    let cut = all.len() * 3 / 4;
    Prepared {
        train: all[..cut].to_vec(),
        dev: all[cut..].to_vec(),
        test: Some(all[cut..].to_vec()),
        ..Default::default()
    }
}

#[test]
fn same_seed_same_history() {
    let cfg = run_config(TransformKind::Am, Task::Sc);
    let d = data(30);
    let (a, _) = train_one(&cfg, &d, 3).unwrap();
    let (b, _) = train_one(&cfg, &d, 3).unwrap();
    assert_eq!(a.history.len(), 3);
    assert_eq!(a.losses(), b.losses());
    let (c, _) = train_one(&cfg, &d, 4).unwrap();
    assert_ne!(a.losses(), c.losses());
}

#[test]
fn zero_epochs_evaluates_untrained_weights() {
    let mut cfg = run_config(TransformKind::Ag, Task::Oe);
    cfg.train.epochs = 0;
    let d = data(12);
    let (r, ckpt) = train_one(&cfg, &d, 1).unwrap();
    assert!(r.history.is_empty());
    assert_eq!(r.best_epoch, 0);
    assert!(r.test.is_some() && r.dev.is_some());
    let (fresh, _) = build_model(&cfg.train, Task::Oe, TransformKind::Ag, &build_tokenizer(&d.train, &cfg.train).unwrap(), 1).unwrap();
    assert_eq!(ckpt.model, fresh);
}

#[test]
fn training_reduces_loss_and_selects_on_dev() {
    let mut cfg = run_config(TransformKind::Ac, Task::Oe);
    cfg.train.epochs = 6;
    let (r, _) = train_one(&cfg, &data(40), 2).unwrap();
    let losses = r.losses();
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
    let best = r.history.iter().filter_map(|h| h.dev_metric).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.history[r.best_epoch - 1].dev_metric, Some(best));
    assert_eq!(r.dev.as_ref().unwrap().headline(), best);
}

#[test]
fn early_stopping_honours_patience() {
    let mut cfg = run_config(TransformKind::Ag, Task::Sc);
    cfg.train.epochs = 30;
    cfg.train.patience = Some(1);
    cfg.train.learning_rate = Some(1e-9);
    let (r, _) = train_one(&cfg, &data(20), 1).unwrap();
    assert!(r.stopped_early);
    assert_eq!(r.history.len(), 2);
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let mut cfg = run_config(TransformKind::Ag, Task::Sc);
    cfg.train.learning_rate = Some(1e300);
    cfg.train.epochs = 5;
    match train_one(&cfg, &data(20), 1) {
        Err(Error::NonFiniteLoss { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn empty_training_set_is_an_argument_error() {
    let cfg = run_config(TransformKind::Ag, Task::Sc);
    assert!(matches!(train_one(&cfg, &Prepared::default(), 1), Err(Error::Argument(_))));
}

#[test]
fn pretrained_backend_is_unsupported() {
    let mut cfg = run_config(TransformKind::Ag, Task::Sc);
    cfg.train.backend = "pretrained:roberta-base".parse().unwrap();
    assert!(matches!(train_one(&cfg, &data(8), 1), Err(Error::Unsupported(_))));
}

#[test]
fn seed_averaging() {
    let mut cfg = run_config(TransformKind::Ap, Task::Sc);
    cfg.train.epochs = 1;
    let d = data(16);
    cfg.train.seeds = vec![5];
    let single = run_with_data(&cfg, &d);
    assert_eq!(single.mean_test.as_ref(), single.seeds[0].test.as_ref());

    cfg.train.seeds = vec![9, 9, 9];
    let same = run_with_data(&cfg, &d);
    let f1s: Vec<f64> = same.seeds.iter().map(|s| s.test.as_ref().unwrap().headline()).collect();
    assert!(f1s.iter().all(|f| *f == f1s[0]));
    assert_eq!(same.mean_test.as_ref().unwrap().headline(), f1s[0]);

    cfg.train.seeds = vec![1, 2, 3, 4, 5];
    let five = run_with_data(&cfg, &d);
    assert!(!five.partial);
    let reports = five.reports();
    let test = reports.iter().find(|r| r.split == "test").unwrap();
    assert_eq!(test.per_seed.len(), 5);
    let table = render_seed_table(test);
    assert_eq!(table.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 5);
    assert_eq!(table.lines().filter(|l| l.starts_with("mean")).count(), 1);
}

#[test]
fn failing_seeds_mark_the_run_partial() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut cfg = run_config(TransformKind::Ag, Task::Sc);
    cfg.train.epochs = 1;
    cfg.train.seeds = vec![1, 2];
    cfg.train.checkpoint_root = Some(blocker);
    let r = run_with_data(&cfg, &data(8));
    assert!(r.partial);
    assert_eq!(r.failures.len(), 2);
    assert!(r.mean_test.is_none());
}

#[test]
fn checkpoint_round_trip_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(TransformKind::Am, Task::Oe);
    cfg.train.checkpoint_root = Some(dir.path().to_path_buf());
    let d = data(20);
    let (r, ckpt) = train_one(&cfg, &d, 3).unwrap();
    let path = r.checkpoint.clone().unwrap();
    assert!(path.ends_with("unit/3/best/checkpoint.json"));
    let loaded = Checkpoint::load(path.parent().unwrap()).unwrap();
    assert_eq!(loaded, ckpt);
    let again = evaluate(&loaded.predictor(), d.test.as_ref().unwrap(), cfg.train.oe_aggregation).unwrap();
    assert_eq!(Some(again.metrics), r.test);
}

const TOML: &str = r#"
name = "grid"
transforms = ["ag", "am"]

[train]
backend = "tiny:3"
learning_rate = 0.01
seeds = [1, 2]

[[datasets]]
name = "lap"
task = "sc"
domain = "laptop"
train = "train.jsonl"

[[datasets]]
name = "rest"
task = "oe"
domain = "restaurant"
train = "oe.jsonl"
"#;

#[test]
fn experiment_config_expands_grid() {
    let cfg = ExperimentConfig::from_toml_str(TOML, &[]).unwrap();
    let runs = cfg.runs();
    assert_eq!(runs.len(), 4);
    assert_eq!(runs[0].run_id, "grid-lap-sc-ag");
    assert_eq!(runs[3].run_id, "grid-rest-oe-am");
    assert_eq!(cfg.train.batch_size, 64);
    assert_eq!(cfg.train.backend, Backend::Tiny { seed: 3 });
    assert_eq!(runs[0].dataset.dev_size, 150);
    let defaults = TrainSettings::default();
    assert_eq!(defaults.learning_rate_for(Task::Sc), 1e-5);
    assert_eq!(defaults.learning_rate_for(Task::Oe), 5e-5);
    assert_eq!(defaults.max_sequence_length, 128);
}

#[test]
fn overrides_and_unknown_keys() {
    let o = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let cfg = ExperimentConfig::from_toml_str(
        TOML,
        &o(&["train.epochs=9", "train.head.dropout=0.3", "datasets.1.dev_fraction=0.1", "train.prompt=the aspect is"]),
    )
    .unwrap();
    assert_eq!(cfg.train.epochs, 9);
    assert_eq!(cfg.train.head.dropout, 0.3);
    assert_eq!(cfg.datasets[1].dev_fraction, 0.1);
    assert_eq!(cfg.train.prompt, "the aspect is");
    for bad in [&["train.epoch=3"][..], &["nonsense=1"], &["train.batch_size=0"], &["datasets.5.name=x"], &["novalue"]] {
        assert!(matches!(ExperimentConfig::from_toml_str(TOML, &o(bad)), Err(Error::Config(_))), "{bad:?}");
    }
    assert!(matches!(ExperimentConfig::from_toml_str("name = 1", &[]), Err(Error::Config(_))));
}
