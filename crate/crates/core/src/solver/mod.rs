//! Exact and greedy construction of fair classification trees.
//!
//! [`solve`] maximizes the number of correctly classified training points over
//! every valid tree of the requested depth whose predictions satisfy the
//! compiled fairness constraints. [`greedy_deepen`] solves a shallow tree
//! exactly and grows it one level at a time with earlier splits frozen.

mod labeling;
mod lagrange;
mod problem;
mod search;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fairness::FairnessSpec;
use crate::tree::{DecisionTree, NodeId, NodeKind, TreeTopology};

use problem::{LeafStats, Problem};
use search::{Act, Setup};

/// Three hours.
pub const DEFAULT_TIME_LIMIT: f64 = 3.0 * 3600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub depth: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Explore the first branching choice on a thread pool.
    pub parallel: bool,
    /// Worker count for parallel mode; `None` uses every core.
    pub threads: Option<usize>,
}

impl SolveOptions {
    pub fn new(depth: usize) -> Self {
        Self { depth, time_limit: DEFAULT_TIME_LIMIT, parallel: false, threads: None }
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    fn validate(&self) -> Result<()> {
        TreeTopology::new(self.depth)?;
        if !(self.time_limit > 0.0) {
            return Err(Error::Argument(format!("time limit must be positive, got {}", self.time_limit)));
        }
        if self.threads == Some(0) {
            return Err(Error::Argument("thread count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeLimit => "feasible_time_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Search nodes where an action was applied.
    pub nodes: u64,
    /// Search nodes discarded by the bound.
    pub pruned: u64,
    /// Complete structures handed to the labeling search.
    pub structures: u64,
    /// Labeling search nodes.
    pub labelings: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seconds: f64,
    pub objective: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub tree: DecisionTree,
    /// Correctly classified training points.
    pub objective: usize,
    /// Proven upper bound on the objective.
    pub bound: usize,
    pub status: SolveStatus,
    pub stats: SolveStats,
    /// Incumbent improvements, the first from the warm start.
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    pub fn gap(&self) -> usize {
        self.bound - self.objective
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run(
    prob: &Problem,
    topology: TreeTopology,
    forced: Vec<Option<Act>>,
    seed: Option<DecisionTree>,
    options: &SolveOptions,
    deadline: Instant,
) -> Result<SolveResult> {
    let started = Instant::now();
    let setup = Setup { prob, topology, forced, seed, deadline: Some(deadline), parallel: options.parallel, started };
    let outcome = match (options.parallel, options.threads) {
        (true, Some(k)) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start thread pool: {e}")))?
            .install(|| search::run(&setup)),
        _ => search::run(&setup),
    };
    let c = outcome.counters;
    Ok(SolveResult {
        objective: outcome.objective as usize,
        bound: outcome.bound as usize,
        status: if outcome.aborted { SolveStatus::FeasibleTimeLimit } else { SolveStatus::Optimal },
        stats: SolveStats {
            nodes: c.nodes,
            pruned: c.pruned,
            structures: c.structures,
            labelings: c.labelings,
            seconds: started.elapsed().as_secs_f64(),
        },
        trace: outcome
            .trace
            .into_iter()
            .map(|(seconds, objective)| TraceEntry { seconds, objective: objective as usize })
            .collect(),
        tree: outcome.tree,
    })
}

fn deadline(options: &SolveOptions) -> Instant {
    let limit = Duration::try_from_secs_f64(options.time_limit).unwrap_or(Duration::from_secs(u32::MAX as u64));
    let now = Instant::now();
    now.checked_add(limit).unwrap_or(now + Duration::from_secs(u32::MAX as u64))
}

fn log_result(what: &str, res: &SolveResult) {
    log::info!(
        "{what}: depth {} objective {} bound {} gap {} status {} in {:.3}s",
        res.tree.depth(),
        res.objective,
        res.bound,
        res.gap(),
        res.status.as_str(),
        res.stats.seconds
    );
}

/// Finds an optimal tree of depth at most `options.depth`.
///
/// Among optima, the tree returned is the first in the canonical order: nodes
/// decided breadth-first, `predict` before `branch on feature 0, 1, ...`, then
/// labels in binary counting order with the first prediction node most
/// significant. With `parallel` set, objective, bound and status are unchanged
/// but the tree may be a different optimum when the time limit is hit.
pub fn solve(data: &Dataset, spec: &FairnessSpec, options: &SolveOptions) -> Result<SolveResult> {
    options.validate()?;
    let prob = Problem::new(data, spec)?;
    let topology = TreeTopology::new(options.depth)?;
    let res = run(&prob, topology, vec![None; topology.num_nodes() + 1], None, options, deadline(options))?;
    log_result("solve", &res);
    Ok(res)
}

/// Solves depth `start_depth` exactly, then repeatedly adds one level. Each
/// extension keeps every branching node of the previous tree, keeps earlier
/// prediction nodes as predictions, and optimizes the former leaves (split or
/// predict) together with all labels. Returns one result per depth, starting at
/// `start_depth`.
///
/// The time limit applies to the whole chain. Bounds and statuses of the later
/// steps refer to the restricted problem of that step.
pub fn greedy_chain(
    data: &Dataset,
    spec: &FairnessSpec,
    start_depth: usize,
    target_depth: usize,
    options: &SolveOptions,
) -> Result<Vec<SolveResult>> {
    if start_depth == 0 || start_depth > target_depth {
        return Err(Error::Argument(format!(
            "greedy extension needs 1 <= start depth <= target depth, got {start_depth} and {target_depth}"
        )));
    }
    let mut opts = options.clone();
    opts.depth = target_depth;
    opts.validate()?;
    let prob = Problem::new(data, spec)?;
    let limit = deadline(options);

    let first_topo = TreeTopology::new(start_depth)?;
    let mut results = vec![run(&prob, first_topo, vec![None; first_topo.num_nodes() + 1], None, options, limit)?];
    log_result("greedy start", &results[0]);
    for depth in start_depth + 1..=target_depth {
        let prev = &results.last().expect("nonempty").tree;
        let topology = TreeTopology::new(depth)?;
        let forced = frozen_actions(prev, topology);
        let seed = extend(prev, topology);
        let res = run(&prob, topology, forced, Some(seed), options, limit)?;
        log_result("greedy step", &res);
        results.push(res);
    }
    Ok(results)
}

/// [`greedy_chain`] returning only the deepest tree.
pub fn greedy_deepen(
    data: &Dataset,
    spec: &FairnessSpec,
    start_depth: usize,
    target_depth: usize,
    options: &SolveOptions,
) -> Result<SolveResult> {
    Ok(greedy_chain(data, spec, start_depth, target_depth, options)?.pop().expect("at least one depth"))
}

fn frozen_actions(prev: &DecisionTree, topology: TreeTopology) -> Vec<Option<Act>> {
    let mut forced = vec![None; topology.num_nodes() + 1];
    let old = prev.topology();
    for n in old.nodes() {
        forced[n] = match prev.kind(n) {
            NodeKind::Branch { feature } => Some(Act::Branch(feature)),
            NodeKind::Predict { .. } if !old.is_terminal(n) => Some(Act::Predict),
            _ => None,
        };
    }
    forced
}

fn extend(prev: &DecisionTree, topology: TreeTopology) -> DecisionTree {
    let mut tree = DecisionTree::empty(topology);
    for n in prev.topology().nodes() {
        tree.set(n, prev.kind(n)).expect("deeper topology contains every node");
    }
    tree
}

/// Result of [`label_leaves`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Labeling {
    pub labels: BTreeMap<NodeId, u8>,
    pub objective: usize,
}

/// Best class assignment for a fixed partition of the datapoints into
/// prediction nodes. Ties go to the first labeling in binary counting order
/// over the nodes in increasing id order. Returns `None` if no labeling
/// satisfies the constraints.
pub fn label_leaves(
    partition: &BTreeMap<NodeId, Vec<usize>>,
    spec: &FairnessSpec,
    data: &Dataset,
) -> Result<Option<Labeling>> {
    let mut seen = vec![false; data.len()];
    for members in partition.values() {
        for &i in members {
            if i >= data.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Argument(format!("datapoint {i} is out of range or assigned twice")));
            }
        }
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(Error::Argument(format!("datapoint {i} is not assigned to any prediction node")));
    }
    let prob = Problem::new(data, spec)?;
    let leaves: Vec<LeafStats> =
        partition.values().map(|m| prob.stats(&prob.counts(&prob.cell_from_indices(m)))).collect();
    let thetas = [lagrange::Multipliers::zero(&prob)];
    let out = labeling::Labeler::new(&prob, &leaves, &thetas).solve(-1);
    Ok(out.found.map(|(value, labels)| Labeling {
        labels: partition.keys().copied().zip(labels).collect(),
        objective: value as usize,
    }))
}

/// Node of a partially decided tree for [`upper_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialNode {
    Branch {
        feature: usize,
    },
    /// A prediction node whose class is not chosen yet.
    Predict,
    /// Root of a subtree that is not decided yet.
    Open,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialTree {
    pub topology: TreeTopology,
    /// Indexed by node id; index 0 is unused.
    pub nodes: Vec<PartialNode>,
}

impl PartialTree {
    pub fn open(topology: TreeTopology) -> Self {
        let mut nodes = vec![PartialNode::Pruned; topology.num_nodes() + 1];
        nodes[1] = PartialNode::Open;
        Self { topology, nodes }
    }
}

/// Accuracy bound for any completion of `partial`, ignoring fairness:
/// `max(#0, #1)` per prediction cell plus the size of every open cell.
pub fn upper_bound(partial: &PartialTree, data: &Dataset) -> Result<usize> {
    let mut cells: BTreeMap<NodeId, [usize; 2]> = BTreeMap::new();
    for i in 0..data.len() {
        let mut n = 1;
        loop {
            match partial.nodes.get(n).copied().unwrap_or(PartialNode::Pruned) {
                PartialNode::Branch { feature } => {
                    if feature >= data.n_features() || partial.topology.is_terminal(n) {
                        return Err(Error::Argument(format!("node {n} cannot branch on feature {feature}")));
                    }
                    n = 2 * n + usize::from(data.feature(i, feature));
                }
                PartialNode::Predict => {
                    cells.entry(n).or_default()[usize::from(data.label(i))] += 1;
                    break;
                }
                PartialNode::Open => {
                    cells.entry(n).or_default()[0] += 1;
                    cells.entry(n).or_default()[1] += 1;
                    break;
                }
                PartialNode::Pruned => {
                    return Err(Error::Argument(format!("datapoint {i} reaches undecided node {n}")));
                }
            }
        }
    }
    Ok(cells.iter().map(|(&n, c)| if partial.nodes[n] == PartialNode::Open { c[0] } else { c[0].max(c[1]) }).sum())
}
