use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::{Method, Report, RunRow};

/// Columns of `rows.csv` and `candidates.csv`.
pub const ROW_COLUMNS: [&str; 16] = [
    "method",
    "seed",
    "depth",
    "delta",
    "status",
    "objective",
    "bound",
    "gap",
    "n_train",
    "n_test",
    "train_accuracy",
    "test_accuracy",
    "train_disparity",
    "test_disparity",
    "train_satisfied",
    "validation_accuracy",
];

/// Columns of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 11] = [
    "method",
    "depth",
    "delta",
    "runs",
    "optimal_runs",
    "mean_depth",
    "mean_train_accuracy",
    "mean_test_accuracy",
    "mean_train_disparity",
    "mean_test_disparity",
    "max_gap",
];

const TIMING_COLUMNS: [&str; 5] = ["method", "seed", "depth", "delta", "seconds"];

/// Means over seeds of one `(method, depth, delta)` cell, or of one
/// `(method, delta)` cell when depths were tuned (`depth` empty).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub depth: Option<usize>,
    pub delta: f64,
    pub runs: usize,
    pub optimal_runs: usize,
    pub mean_depth: f64,
    pub mean_train_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub mean_train_disparity: f64,
    /// Mean over the runs that have a test disparity; empty if none has.
    pub mean_test_disparity: Option<f64>,
    pub max_gap: Option<usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups rows by method, depth (when `by_depth`) and delta, in the order
/// the groups first appear.
pub fn summarize(rows: &[RunRow], by_depth: bool) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(Method, Option<usize>, u64), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.method, by_depth.then_some(r.depth), r.delta.to_bits());
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            SummaryRow {
                method: key.0,
                depth: key.1,
                delta: f64::from_bits(key.2),
                runs: g.len(),
                optimal_runs: g.iter().filter(|r| r.status == "optimal").count(),
                mean_depth: mean(g.iter().map(|r| r.depth as f64)).expect("nonempty"),
                mean_train_accuracy: mean(g.iter().map(|r| r.train_accuracy)).expect("nonempty"),
                mean_test_accuracy: mean(g.iter().map(|r| r.test_accuracy)).expect("nonempty"),
                mean_train_disparity: mean(g.iter().map(|r| r.train_disparity)).expect("nonempty"),
                mean_test_disparity: mean(g.iter().filter_map(|r| r.test_disparity)),
                max_gap: g.iter().filter_map(|r| r.gap).max(),
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_record(r: &RunRow) -> Vec<String> {
    vec![
        r.method.to_string(),
        r.seed.to_string(),
        r.depth.to_string(),
        r.delta.to_string(),
        r.status.clone(),
        r.objective.to_string(),
        opt(r.bound),
        opt(r.gap),
        r.n_train.to_string(),
        r.n_test.to_string(),
        r.train_accuracy.to_string(),
        r.test_accuracy.to_string(),
        r.train_disparity.to_string(),
        opt(r.test_disparity),
        r.train_satisfied.to_string(),
        opt(r.validation_accuracy),
    ]
}

fn summary_record(s: &SummaryRow) -> Vec<String> {
    vec![
        s.method.to_string(),
        opt(s.depth),
        s.delta.to_string(),
        s.runs.to_string(),
        s.optimal_runs.to_string(),
        s.mean_depth.to_string(),
        s.mean_train_accuracy.to_string(),
        s.mean_test_accuracy.to_string(),
        s.mean_train_disparity.to_string(),
        opt(s.mean_test_disparity),
        opt(s.max_gap),
    ]
}

fn write_table(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report into directory `dir`, creating it if needed:
///
/// * `rows.csv`: one line per run ([`ROW_COLUMNS`]);
/// * `summary.csv`: means per group ([`SUMMARY_COLUMNS`]);
/// * `candidates.csv`: every depth tried, for depth tuning only;
/// * `report.json`: config, rows with trees, candidates and summary;
/// * `timings.csv`: wall time per run.
///
/// Everything except `timings.csv` is a function of the config and data only.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let rows = dir.join("rows.csv");
    write_table(&rows, &ROW_COLUMNS, report.rows.iter().map(row_record))?;
    written.push(rows);
    let summary = dir.join("summary.csv");
    write_table(&summary, &SUMMARY_COLUMNS, report.summary.iter().map(summary_record))?;
    written.push(summary);
    if !report.candidates.is_empty() {
        let candidates = dir.join("candidates.csv");
        write_table(&candidates, &ROW_COLUMNS, report.candidates.iter().map(row_record))?;
        written.push(candidates);
    }
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    written.push(json);
    let timed = if report.candidates.is_empty() { &report.rows } else { &report.candidates };
    let timings = dir.join("timings.csv");
    write_table(
        &timings,
        &TIMING_COLUMNS,
        timed.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.seed.to_string(),
                r.depth.to_string(),
                r.delta.to_string(),
                format!("{:.6}", r.seconds),
            ]
        }),
    )?;
    written.push(timings);
    Ok(written)
}
