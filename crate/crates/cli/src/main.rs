mod heatmap;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aspect_ctx::advgen::{generate_arts_oe, read_adversarial_jsonl, write_adversarial_jsonl, GenerationConfig, Lexicon};
use aspect_ctx::corpus::{compute_stats, read_jsonl, write_jsonl, Domain, Loaded, Task};
use aspect_ctx::encoder::{SpecialTokens, TokenizerHandle};
use aspect_ctx::evaluator::{
    evaluate, render_heatmap_text, render_seed_table, render_table, robustness_eval, saliency, MetricsReport,
    OeAggregation, SaliencyMap, SeedMetrics,
};
use aspect_ctx::trainer::{load_dataset, run_experiment, Checkpoint, DataFormat, ExperimentConfig};
use aspect_ctx::transform::{apply, TransformConfig, TransformKind};
use aspect_ctx::{Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aspect-ctx", version, about = "Aspect-specific context modeling for aspect-based sentiment analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, validate it and write normalized JSONL plus statistics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DataFormat,
        /// Required for JSONL; implied by the other formats.
        #[arg(long)]
        task: Option<Task>,
        /// Required for formats that do not record one.
        #[arg(long)]
        domain: Option<Domain>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the transformed subword sequence of the first instances.
    Preview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DataFormat,
        #[arg(long)]
        domain: Option<Domain>,
        #[arg(long)]
        transform: TransformKind,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// One JSON object per instance instead of text.
        #[arg(long)]
        jsonl: bool,
        /// WordPiece vocabulary file; built from the input words when absent.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        max_len: usize,
        #[arg(long)]
        prompt: Option<String>,
    },
    /// Train every (dataset, transform) run of an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dotted override, e.g. `train.epochs=3`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Train this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a checkpoint on a labeled file or an adversarial set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DataFormat,
        /// Refuse unless the checkpoint was trained for this task.
        #[arg(long)]
        task: Option<Task>,
        /// Treat the input as adversarial JSONL and report robustness.
        #[arg(long)]
        adversarial: bool,
        #[arg(long, default_value = "micro")]
        oe_aggregation: String,
        /// Metrics report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance predictions as JSONL.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Saliency maps as JSONL.
        #[arg(long)]
        saliency: Option<PathBuf>,
    },
    /// Generate an adversarial test set from opinion-annotated data.
    GenAdv {
        #[arg(long)]
        test: PathBuf,
        /// Source of distractor clauses.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DataFormat,
        #[arg(long)]
        domain: Option<Domain>,
        /// Tab-separated `word antonym polarity` lines; the built-in list when absent.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Distractor clauses per AddDiff variant.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Render metrics reports as tables and saliency maps as heat maps.
    Report {
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        per_seed: bool,
        #[arg(long)]
        saliency: Option<PathBuf>,
        /// Draw the saliency maps into a PNG.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Also write the rendered text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest { input, format, task, domain, out } => ingest(&input, format, task, domain, &out),
        Command::Preview { input, format, domain, transform, n, jsonl, vocab, max_len, prompt } => {
            let mut cfg = TransformConfig { max_sequence_length: max_len, ..Default::default() };
            if let Some(p) = prompt {
                cfg.prompt = p;
            }
            preview(&input, format, domain, transform, n, jsonl, vocab.as_deref(), &cfg)
        }
        Command::Train { config, overrides, seed, out } => train(&config, &overrides, seed, &out),
        Command::Eval { checkpoint, input, format, task, adversarial, oe_aggregation, out, predictions, saliency } => {
            eval(EvalArgs {
                checkpoint,
                input,
                format,
                task,
                adversarial,
                oe_aggregation,
                out,
                predictions,
                saliency,
            })
        }
        Command::GenAdv { test, train, format, domain, lexicon, seed, k, out, manifest } => {
            gen_adv(&test, &train, format, domain, lexicon.as_deref(), seed, k, &out, manifest)
        }
        Command::Report { metrics, per_seed, saliency, image, out } => {
            report(&metrics, per_seed, saliency.as_deref(), image.as_deref(), out.as_deref())
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_json_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    write_file(path, &text)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a file in any supported format. JSONL without a task keeps every
/// record; the other formats imply their task and need a domain.
fn load_input(path: &Path, format: DataFormat, task: Option<Task>, domain: Option<Domain>) -> Result<Loaded> {
    let implied = match format {
        DataFormat::Jsonl => None,
        DataFormat::SemevalXml => Some(Task::Sc),
        DataFormat::ToweTsv => Some(Task::Oe),
    };
    let task = match (task, implied) {
        (None, None) => {
            return Ok(Loaded { instances: read_jsonl(path)?, ..Default::default() });
        }
        (Some(t), _) | (None, Some(t)) => t,
    };
    let domain = match (domain, format) {
        (Some(d), _) => d,
        (None, DataFormat::Jsonl) => Domain::Restaurant,
        (None, f) => return Err(Error::Argument(format!("--domain is required for {f:?} input"))),
    };
    load_dataset(path, format, task, domain)
}

fn ingest(input: &Path, format: DataFormat, task: Option<Task>, domain: Option<Domain>, out: &Path) -> Result<ExitCode> {
    if format == DataFormat::Jsonl && task.is_none() {
        return Err(Error::Argument("--task is required for JSONL input".into()));
    }
    let loaded = load_input(input, format, task, domain)?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", input.display());
    }
    for r in &loaded.rejections {
        eprintln!("rejected {}: {}", r.instance_id, r.reason);
    }
    let stats = compute_stats(&loaded.instances);
    write_jsonl(out, &loaded.instances)?;
    let summary = serde_json::json!({
        "stats": stats,
        "rejections": loaded.rejection_counts(),
        "warnings": loaded.warnings,
    });
    write_json(&with_suffix(out, ".stats.json"), &summary)?;
    println!("{stats} rejected={}", loaded.rejections.len());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn preview(
    input: &Path,
    format: DataFormat,
    domain: Option<Domain>,
    kind: TransformKind,
    n: usize,
    jsonl: bool,
    vocab: Option<&Path>,
    cfg: &TransformConfig,
) -> Result<ExitCode> {
    let instances = load_input(input, format, None, domain)?.instances;
    let tok = match vocab {
        Some(path) => TokenizerHandle::from_vocab_file(path, SpecialTokens::default(), false)?,
        None => {
            let words = instances
                .iter()
                .flat_map(|i| i.words.iter().map(String::as_str))
                .chain(cfg.prompt.split_whitespace());
            TokenizerHandle::build_from_words(words, 1, SpecialTokens::default(), false)?
        }
    };
    let tok = if kind == TransformKind::Am && !tok.has_markers() { tok.register_markers()? } else { tok };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for inst in instances.iter().take(n) {
        match apply(kind, inst, &tok, cfg) {
            Ok(ti) => {
                let line = if jsonl {
                    serde_json::to_string(&ti.preview_record())?
                } else {
                    format!(
                        "{}\t{}\taspect={}..={}",
                        inst.id,
                        ti.subtokens.join(" "),
                        ti.aspect_first,
                        ti.aspect_last
                    )
                };
                writeln!(w, "{line}").map_err(io_err(Path::new("<stdout>")))?;
            }
            Err(e) => eprintln!("{}: {e}", inst.id),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn checkpoint_home() -> PathBuf {
    std::env::var_os("ASPECT_CTX_HOME")
        .map(|h| PathBuf::from(h).join("checkpoints"))
        .unwrap_or_else(|| PathBuf::from("checkpoints"))
}

fn train(config: &Path, overrides: &[String], seed: Option<u64>, out: &Path) -> Result<ExitCode> {
    let mut exp = ExperimentConfig::load(config, overrides)?;
    if let Some(s) = seed {
        exp.train.seeds = vec![s];
    }
    if exp.train.checkpoint_root.is_none() {
        exp.train.checkpoint_root = Some(checkpoint_home());
    }
    let mut reports = Vec::new();
    let mut failed_runs = Vec::new();
    for run in exp.runs() {
        log::info!("training {}", run.run_id);
        let result = run_experiment(&run)?;
        let dir = out.join(&run.run_id);
        write_json(&dir.join("result.json"), &result)?;
        for r in result.reports() {
            write_json(&dir.join(format!("metrics-{}.json", r.split)), &r)?;
            reports.push(r);
        }
        for f in &result.failures {
            eprintln!("{} seed {} failed: {}", result.run_id, f.seed, f.error);
        }
        if result.seeds.is_empty() {
            failed_runs.push(result.run_id.clone());
        }
        let headline = result.mean_test.as_ref().or(result.mean_dev.as_ref());
        println!(
            "{} seeds={}/{} {}",
            result.run_id,
            result.seeds.len(),
            run.train.seeds.len(),
            headline.map_or_else(|| "no scores".to_string(), |m| format!("{}={:.4}", split_name(&result), m.headline()))
        );
    }
    let table = render_table(&reports);
    write_file(&out.join("table.txt"), &table)?;
    print!("{table}");
    if failed_runs.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("no seed survived in: {}", failed_runs.join(", "));
        Ok(ExitCode::from(1))
    }
}

fn split_name(r: &aspect_ctx::trainer::RunResult) -> &'static str {
    if r.mean_test.is_some() {
        "test"
    } else {
        "dev"
    }
}

struct EvalArgs {
    checkpoint: PathBuf,
    input: PathBuf,
    format: DataFormat,
    task: Option<Task>,
    adversarial: bool,
    oe_aggregation: String,
    out: Option<PathBuf>,
    predictions: Option<PathBuf>,
    saliency: Option<PathBuf>,
}

fn parse_aggregation(s: &str) -> Result<OeAggregation> {
    match s {
        "micro" => Ok(OeAggregation::Micro),
        "macro" => Ok(OeAggregation::Macro),
        _ => Err(Error::Argument(format!("unknown aggregation {s:?} (micro, macro)"))),
    }
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if let Some(t) = args.task {
        if t != ckpt.task {
            return Err(Error::Refused(format!("checkpoint was trained for {}, not {t}", ckpt.task)));
        }
    }
    let aggregation = parse_aggregation(&args.oe_aggregation)?;
    let p = ckpt.predictor();
    let (split, metrics, instances) = if args.adversarial {
        let adv = read_adversarial_jsonl(&args.input)?;
        let rob = robustness_eval(&p, Some(ckpt.domain), &adv, aggregation)?;
        for (s, m) in &rob.per_strategy {
            println!("{s} n={} score={:.4}", m.n_evaluated, m.headline());
        }
        println!("aspect_robustness={:.4}", rob.aspect_robustness);
        let targets = adv.into_iter().filter(|a| a.is_target()).map(|a| a.instance).collect();
        ("adversarial", rob.overall, targets)
    } else {
        let loaded = load_input(&args.input, args.format, None, Some(ckpt.domain))?;
        if loaded.instances.is_empty() {
            return Err(Error::Argument(format!("{} holds no usable instances", args.input.display())));
        }
        let ev = evaluate(&p, &loaded.instances, aggregation)?;
        if let Some(path) = &args.predictions {
            write_json_lines(path, &ev.predictions)?;
        }
        ("test", ev.metrics, loaded.instances)
    };
    match ckpt.task {
        Task::Sc => println!(
            "task=sc split={split} n={} accuracy={:.4} macro_f1={:.4} unscoreable={}",
            metrics.n_evaluated,
            metrics.accuracy.unwrap_or(0.0),
            metrics.macro_f1.unwrap_or(0.0),
            metrics.n_unscoreable
        ),
        Task::Oe => println!(
            "task=oe split={split} n={} precision={:.4} recall={:.4} f1={:.4} unscoreable={}",
            metrics.n_evaluated,
            metrics.precision.unwrap_or(0.0),
            metrics.recall.unwrap_or(0.0),
            metrics.f1.unwrap_or(0.0),
            metrics.n_unscoreable
        ),
    }
    if let Some(path) = &args.out {
        let report = MetricsReport {
            run_id: ckpt.run_id.clone(),
            task: ckpt.task,
            transform: ckpt.transform,
            dataset: ckpt.dataset.clone(),
            split: split.to_string(),
            n_unscoreable: metrics.n_unscoreable,
            per_seed: vec![SeedMetrics { seed: ckpt.seed, metrics: metrics.clone() }],
            metrics,
        };
        write_json(path, &report)?;
    }
    if let Some(path) = &args.saliency {
        let mut maps = Vec::new();
        for inst in &instances {
            match p.transform(inst) {
                Ok(ti) => maps.push(saliency(&ckpt.model, &ti)?),
                Err(Error::AspectTruncated { .. }) => log::warn!("{}: aspect truncated, no saliency", inst.id),
                Err(e) => return Err(e),
            }
        }
        write_json_lines(path, &maps)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn gen_adv(
    test: &Path,
    train: &Path,
    format: DataFormat,
    domain: Option<Domain>,
    lexicon: Option<&Path>,
    seed: u64,
    k: usize,
    out: &Path,
    manifest: Option<PathBuf>,
) -> Result<ExitCode> {
    let load = |path: &Path| -> Result<Vec<aspect_ctx::corpus::RawInstance>> {
        let loaded = load_input(path, format, Some(Task::Oe), domain)?;
        for r in &loaded.rejections {
            log::warn!("{}: skipping {}: {}", path.display(), r.instance_id, r.reason);
        }
        Ok(loaded.instances)
    };
    let test_set = load(test)?;
    let train_set = load(train)?;
    let lex = match lexicon {
        Some(path) => Lexicon::load(path)?,
        None => Lexicon::seed(),
    };
    let cfg = GenerationConfig { seed, k, ..Default::default() };
    let generation = generate_arts_oe(&test_set, &train_set, &lex, &cfg);
    write_adversarial_jsonl(out, &generation.instances)?;
    let manifest_path = manifest.unwrap_or_else(|| with_suffix(out, ".manifest.json"));
    write_json(&manifest_path, &generation.manifest)?;
    let m = &generation.manifest;
    let counts: Vec<String> = m.targets.iter().map(|(s, n)| format!("{s}={n}")).collect();
    println!(
        "{} total={} without_source={} shortfall={} dropped={}",
        counts.join(" "),
        m.total_including_source,
        m.total_excluding_source,
        m.add_diff_shortfall,
        m.dropped.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn read_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = serde_json::from_str::<Vec<MetricsReport>>(&text)
        .or_else(|_| serde_json::from_str::<MetricsReport>(&text).map(|r| vec![r]));
    parsed.map_err(|e| Error::Format { locator: path.display().to_string(), message: e.to_string() })
}

fn read_maps(path: &Path) -> Result<Vec<SaliencyMap>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format { locator: format!("{} line {}", path.display(), i + 1), message: e.to_string() })
        })
        .collect()
}

fn report(
    metrics: &[PathBuf],
    per_seed: bool,
    saliency: Option<&Path>,
    image: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    if metrics.is_empty() && saliency.is_none() {
        return Err(Error::Argument("nothing to report: pass --metrics or --saliency".into()));
    }
    let mut text = String::new();
    let mut reports = Vec::new();
    for path in metrics {
        reports.extend(read_reports(path)?);
    }
    if !reports.is_empty() {
        text.push_str(&render_table(&reports));
        if per_seed {
            for r in &reports {
                text.push('\n');
                text.push_str(&render_seed_table(r));
            }
        }
    }
    if let Some(path) = saliency {
        let maps = read_maps(path)?;
        for m in &maps {
            text.push('\n');
            text.push_str(&render_heatmap_text(m));
        }
        if let Some(png) = image {
            heatmap::write_png(&maps, png)?;
        }
    } else if image.is_some() {
        return Err(Error::Argument("--image needs --saliency".into()));
    }
    print!("{text}");
    if let Some(path) = out {
        write_file(path, &text)?;
    }
    Ok(ExitCode::SUCCESS)
}
