//! Experiment sweeps over fairness bounds and depths, depth tuning on a
//! validation split, and report tables.
//!
//! Every run trains one method on one seeded split at one `(depth, delta)` and
//! records in-sample and out-of-sample accuracy and disparity.

mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines;
use crate::dataset::{self, BinarizationConfig, Dataset};
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessSpec};
use crate::solver::{self, SolveOptions};
use crate::tree::DecisionTree;

pub use config::{default_deltas, ExperimentConfig, Method, ModeName};
pub use report::{emit_report, summarize, SummaryRow, ROW_COLUMNS, SUMMARY_COLUMNS};

/// Status recorded for heuristic methods, which prove nothing.
pub const HEURISTIC: &str = "heuristic";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub method: Method,
    pub seed: u64,
    pub depth: usize,
    pub delta: f64,
    /// `optimal`, `feasible_time_limit` or [`HEURISTIC`].
    pub status: String,
    /// Correct training predictions.
    pub objective: usize,
    /// Proven bound on `objective`, for solver methods.
    pub bound: Option<usize>,
    pub gap: Option<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Disparity on the training data under the configured notion.
    pub train_disparity: f64,
    /// Disparity on the test data; empty when the notion has no comparable cells there.
    pub test_disparity: Option<f64>,
    pub train_satisfied: bool,
    /// Validation accuracy, for depth tuning runs.
    pub validation_accuracy: Option<f64>,
    /// Wall time, kept out of serialized reports so reruns compare equal.
    #[serde(skip)]
    pub seconds: f64,
    pub tree: DecisionTree,
}

/// What [`run_sweep`] or [`tune_depth`] produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    /// One row per run, or per selected tree for depth tuning.
    pub rows: Vec<RunRow>,
    /// Every depth tried during tuning; empty for sweeps.
    pub candidates: Vec<RunRow>,
    /// Means per `(method, depth, delta)`; depth tuning groups by `(method, delta)`.
    pub summary: Vec<SummaryRow>,
}

/// Loads and binarizes the configured data file.
pub fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    let bin = BinarizationConfig::from_file(&config.binarization)?;
    dataset::load_csv(&config.dataset, &bin)
}

/// Seeded subsample and group collapsing shared by every run of a seed.
fn prepare(config: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut d = match config.subsample {
        Some(n) => data.subsample(n.min(data.len()), seed)?,
        None => data.clone(),
    };
    if config.mode == ModeName::OneSided && config.collapse_groups {
        d = d.collapse_protected(config.dominant.as_deref().expect("validated"))?;
    }
    Ok(d)
}

/// Checks that the configured groups exist before any run starts.
fn check_groups(config: &ExperimentConfig, data: &Dataset) -> Result<()> {
    if config.mode == ModeName::OneSided {
        for g in [&config.dominant, &config.marginalized].into_iter().flatten() {
            if data.group_index(g).is_none() {
                return Err(Error::Config(format!(
                    "group `{g}` not found; groups are {}",
                    data.group_names().join(", ")
                )));
            }
        }
    }
    Ok(())
}

fn train(
    method: Method,
    config: &ExperimentConfig,
    data: &Dataset,
    spec: &FairnessSpec,
    depth: usize,
) -> Result<(DecisionTree, String, Option<usize>)> {
    let opts = SolveOptions::new(depth).with_time_limit(config.time_limit).with_parallel(config.parallel_solver);
    match method {
        Method::Exact => {
            let r = solver::solve(data, spec, &opts)?;
            Ok((r.tree, r.status.as_str().to_string(), Some(r.bound)))
        }
        Method::Greedy => {
            let start = config.greedy_start_depth.min(depth);
            let r = solver::greedy_deepen(data, spec, start, depth, &opts)?;
            Ok((r.tree, r.status.as_str().to_string(), Some(r.bound)))
        }
        _ => {
            let criterion = method.criterion().expect("baseline method");
            let tree = baselines::cart_build(data, depth, criterion)?;
            Ok((baselines::relabel(&tree, data, spec)?, HEURISTIC.to_string(), None))
        }
    }
}

fn test_disparity(spec: &FairnessSpec, data: &Dataset, tree: &DecisionTree) -> Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let compiled = match fairness::compile(spec, data) {
        Ok(c) => c,
        Err(Error::Dataset(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if compiled.instances.is_empty() && spec.kind != fairness::FairnessKind::None {
        return Ok(None);
    }
    Ok(Some(compiled.disparity(&tree.predict_dataset(data)?).value))
}

struct Job {
    method: Method,
    seed: u64,
    depth: usize,
    delta: f64,
}

fn run_job(
    config: &ExperimentConfig,
    job: &Job,
    fit: &Dataset,
    test: &Dataset,
    validation: Option<&Dataset>,
) -> Result<RunRow> {
    let spec = config.spec(job.delta)?;
    let started = Instant::now();
    let (tree, status, bound) = train(job.method, config, fit, &spec, job.depth)?;
    let seconds = started.elapsed().as_secs_f64();
    let objective = tree.correct_count(fit)?;
    let train_disparity = fairness::disparity(&spec, fit, &tree.predict_dataset(fit)?)?.value;
    let test_accuracy = if test.is_empty() { f64::NAN } else { tree.accuracy(test)? };
    log::info!(
        "{} seed {} depth {} delta {}: train {}/{} test acc {:.4} ({:.2}s)",
        job.method,
        job.seed,
        job.depth,
        job.delta,
        objective,
        fit.len(),
        test_accuracy,
        seconds
    );
    Ok(RunRow {
        method: job.method,
        seed: job.seed,
        depth: job.depth,
        delta: job.delta,
        status,
        objective,
        bound,
        gap: bound.map(|b| b - objective),
        n_train: fit.len(),
        n_test: test.len(),
        train_accuracy: tree.accuracy(fit)?,
        test_accuracy,
        train_disparity,
        test_disparity: test_disparity(&spec, test, &tree)?,
        train_satisfied: fairness::within_bound(train_disparity, spec.delta),
        validation_accuracy: match validation {
            Some(v) if !v.is_empty() => Some(tree.accuracy(v)?),
            _ => None,
        },
        seconds,
        tree,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Splits of one seed: `(fit, validation, test)`; validation is empty for sweeps.
fn splits(config: &ExperimentConfig, data: &Dataset, seed: u64, tuning: bool) -> Result<(Dataset, Dataset, Dataset)> {
    let prepared = prepare(config, data, seed)?;
    let (train, test) = prepared.split(config.train_fraction, seed)?;
    if tuning {
        let (fit, validation) = train.split(config.fit_fraction, seed)?;
        Ok((fit, validation, test))
    } else {
        Ok((train, prepared.select(&[]), test))
    }
}

/// Trains every method at every `(seed, depth, delta)` of the grid.
///
/// Rows come out ordered by seed, depth, delta and method, regardless of
/// `config.jobs`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let data = load_data(config)?;
    run_sweep_on(config, &data)
}

/// [`run_sweep`] on already loaded data.
pub fn run_sweep_on(config: &ExperimentConfig, data: &Dataset) -> Result<Report> {
    config.validate()?;
    check_groups(config, data)?;
    let mut prepared = BTreeMap::new();
    for &seed in &config.seeds {
        prepared.insert(seed, splits(config, data, seed, false)?);
    }
    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        for &depth in &config.depths {
            for &delta in &config.deltas {
                for &method in &config.methods {
                    jobs.push(Job { method, seed, depth, delta });
                }
            }
        }
    }
    let rows = pool(config.jobs)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (fit, _, test) = &prepared[&job.seed];
                run_job(config, job, fit, test, None)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(&rows, true);
    Ok(Report { config: config.clone(), rows, candidates: Vec::new(), summary })
}

/// Chooses the depth with the best validation accuracy per `(seed, delta,
/// method)`. Trees are fit on `fit_fraction` of the training rows and
/// validated on the rest; ties go to the smallest depth.
pub fn tune_depth(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let data = load_data(config)?;
    tune_depth_on(config, &data)
}

/// [`tune_depth`] on already loaded data.
pub fn tune_depth_on(config: &ExperimentConfig, data: &Dataset) -> Result<Report> {
    config.validate()?;
    check_groups(config, data)?;
    let mut prepared = BTreeMap::new();
    for &seed in &config.seeds {
        prepared.insert(seed, splits(config, data, seed, true)?);
    }
    let mut depths = config.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        for &delta in &config.deltas {
            for &method in &config.methods {
                for &depth in &depths {
                    jobs.push(Job { method, seed, depth, delta });
                }
            }
        }
    }
    let candidates = pool(config.jobs)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (fit, validation, test) = &prepared[&job.seed];
                run_job(config, job, fit, test, Some(validation))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<RunRow> = candidates.chunks(depths.len()).map(|group| select_depth(group).clone()).collect();
    let summary = summarize(&rows, false);
    Ok(Report { config: config.clone(), rows, candidates, summary })
}

/// Highest validation accuracy, first (smallest depth) on ties.
pub fn select_depth(candidates: &[RunRow]) -> &RunRow {
    let key = |r: &RunRow| r.validation_accuracy.unwrap_or(f64::NEG_INFINITY);
    let mut best = &candidates[0];
    for r in &candidates[1..] {
        if key(r) > key(best) {
            best = r;
        }
    }
    best
}
