use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Metrics, SaliencyMap};
use crate::corpus::Task;
use crate::transform::TransformKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
}

/// Seed-averaged scores of one run on one split, as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub task: Task,
    pub transform: TransformKind,
    pub dataset: String,
    pub split: String,
    pub metrics: Metrics,
    pub per_seed: Vec<SeedMetrics>,
    pub n_unscoreable: usize,
}

fn split_label(split: &str) -> &str {
    match split {
        "test" => "Standard",
        "adversarial" => "Robustness",
        "dev" => "Dev",
        other => other,
    }
}

fn split_rank(split: &str) -> usize {
    match split {
        "test" => 0,
        "adversarial" => 1,
        "dev" => 2,
        _ => 3,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

fn metric_columns(task: Task) -> &'static [&'static str] {
    match task {
        Task::Sc => &["Acc", "F1"],
        Task::Oe => &["F1"],
    }
}

fn metric_values(m: &Metrics) -> Vec<String> {
    match m.task {
        Task::Sc => vec![pct(m.accuracy), pct(m.macro_f1)],
        Task::Oe => vec![pct(m.f1)],
    }
}

/// Renders reports as one table per task: a row per transform, a column
/// group per (dataset, split), percentages with two decimals.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    for task in [Task::Sc, Task::Oe] {
        let rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.task == task).collect();
        if rs.is_empty() {
            continue;
        }
        let mut groups: Vec<(String, String)> = Vec::new();
        for r in &rs {
            let key = (r.dataset.clone(), r.split.clone());
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        let dataset_order: Vec<String> = groups.iter().fold(Vec::new(), |mut acc, (d, _)| {
            if !acc.contains(d) {
                acc.push(d.clone());
            }
            acc
        });
        groups.sort_by_key(|(d, s)| (dataset_order.iter().position(|x| x == d), split_rank(s), s.clone()));
        let cols = metric_columns(task);
        let cell = 8;
        let group_width = cols.len() * (cell + 1) - 1;
        let label_width = 10;

        let _ = writeln!(out, "{} results (%)", task.to_string().to_uppercase());
        let mut h1 = format!("{:<label_width$}", "Model");
        let mut h2 = format!("{:<label_width$}", "");
        for (d, s) in &groups {
            let title = format!("{d} {}", split_label(s));
            let w = group_width.max(title.len());
            let _ = write!(h1, " | {title:^w$}");
            let metrics: Vec<String> = cols.iter().map(|c| format!("{c:>cell$}")).collect();
            let _ = write!(h2, " | {:>w$}", metrics.join(" "));
        }
        let _ = writeln!(out, "{h1}");
        let _ = writeln!(out, "{h2}");
        let _ = writeln!(out, "{}", "-".repeat(h1.len()));
        for kind in TransformKind::ALL {
            let row: Vec<&&MetricsReport> = rs.iter().filter(|r| r.transform == kind).collect();
            if row.is_empty() {
                continue;
            }
            let mut line = format!("{:<label_width$}", kind.label());
            for (d, s) in &groups {
                let title_len = format!("{d} {}", split_label(s)).len();
                let w = group_width.max(title_len);
                let values = match row.iter().rev().find(|r| &r.dataset == d && &r.split == s) {
                    Some(r) => metric_values(&r.metrics),
                    None => vec!["-".to_string(); cols.len()],
                };
                let cells: Vec<String> = values.iter().map(|v| format!("{v:>cell$}")).collect();
                let _ = write!(line, " | {:>w$}", cells.join(" "));
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');
    }
    out
}

/// One row per seed plus the mean row.
pub fn render_seed_table(report: &MetricsReport) -> String {
    let cols: &[&str] = match report.task {
        Task::Sc => &["Acc", "MacroF1"],
        Task::Oe => &["P", "R", "F1"],
    };
    let values = |m: &Metrics| match m.task {
        Task::Sc => vec![pct(m.accuracy), pct(m.macro_f1)],
        Task::Oe => vec![pct(m.precision), pct(m.recall), pct(m.f1)],
    };
    let mut out = format!("{} {} {} ({})\n", report.run_id, report.dataset, report.split, report.transform);
    let _ = writeln!(out, "{:<10}{}", "seed", cols.iter().map(|c| format!("{c:>9}")).collect::<String>());
    for s in &report.per_seed {
        let _ = writeln!(out, "{:<10}{}", s.seed, values(&s.metrics).iter().map(|v| format!("{v:>9}")).collect::<String>());
    }
    let _ = writeln!(out, "{:<10}{}", "mean", values(&report.metrics).iter().map(|v| format!("{v:>9}")).collect::<String>());
    out
}

/// Text heat map: one subtoken per line with its score and a bar.
pub fn render_heatmap_text(map: &SaliencyMap) -> String {
    let width = map.subtokens.iter().map(|s| s.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    if !map.instance_id.is_empty() {
        let _ = writeln!(out, "{}", map.instance_id);
    }
    for (tok, s) in map.subtokens.iter().zip(&map.scores) {
        let bar = "#".repeat((s * 20.0).round() as usize);
        let _ = writeln!(out, "{tok:<width$} {s:.3} {bar}");
    }
    out
}
