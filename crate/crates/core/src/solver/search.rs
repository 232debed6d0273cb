//! Depth-first branch and bound over tree structures.
//!
//! Nodes are decided in breadth-first order. Each node tries `Predict` and then
//! `Branch(f)` for every feature that is not constant on its cell; terminal
//! nodes can only predict. A complete structure hands its prediction cells to
//! the labeling search. Subtrees are pruned when their bound cannot strictly
//! beat the incumbent, so the first optimum in this order is the one returned.

use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use super::labeling::Labeler;
use super::lagrange::{self, Multipliers};
use super::problem::{is_empty, Bits, LeafStats, Problem};
use crate::tree::{DecisionTree, NodeKind, TreeTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Act {
    Predict,
    Branch(usize),
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Counters {
    pub nodes: u64,
    pub pruned: u64,
    pub structures: u64,
    pub labelings: u64,
}

impl Counters {
    fn add(&mut self, other: &Counters) {
        self.nodes += other.nodes;
        self.pruned += other.pruned;
        self.structures += other.structures;
        self.labelings += other.labelings;
    }
}

pub(crate) struct Outcome {
    pub tree: DecisionTree,
    pub objective: i64,
    pub bound: i64,
    pub aborted: bool,
    pub counters: Counters,
    pub trace: Vec<(f64, i64)>,
}

pub(crate) struct Setup<'a> {
    pub prob: &'a Problem,
    pub topology: TreeTopology,
    /// Per node id; `Some` fixes the action.
    pub forced: Vec<Option<Act>>,
    pub seed: Option<DecisionTree>,
    pub deadline: Option<Instant>,
    pub parallel: bool,
    pub started: Instant,
}

#[derive(Clone)]
struct Engine<'a> {
    prob: &'a Problem,
    topo: TreeTopology,
    last: usize,
    forced: &'a [Option<Act>],
    thetas: Vec<Multipliers>,
    // per multiplier set: (remaining depth, cell) -> relaxed value
    memo: Vec<HashMap<(usize, Bits), f64>>,
    deadline: Option<Instant>,
    shared: Option<&'a AtomicI64>,
    started: Instant,
    cells: Vec<Option<Bits>>,
    counts: Vec<Vec<i64>>,
    // [node][theta]
    leaf_value: Vec<Vec<f64>>,
    open_value: Vec<Vec<f64>>,
    acts: Vec<Option<Act>>,
    best: i64,
    incumbent: Option<DecisionTree>,
    aborted: bool,
    open_bound: i64,
    counters: Counters,
    ticks: u64,
    trace: Vec<(f64, i64)>,
}

impl<'a> Engine<'a> {
    fn new(setup: &'a Setup<'a>) -> Self {
        let last = setup.topology.num_nodes();
        Self {
            prob: setup.prob,
            topo: setup.topology,
            last,
            forced: &setup.forced,
            thetas: vec![Multipliers::zero(setup.prob)],
            memo: vec![HashMap::new()],
            deadline: setup.deadline,
            shared: None,
            started: setup.started,
            cells: vec![None; last + 1],
            counts: vec![Vec::new(); last + 1],
            leaf_value: vec![Vec::new(); last + 1],
            open_value: vec![Vec::new(); last + 1],
            acts: vec![None; last + 1],
            best: -1,
            incumbent: None,
            aborted: false,
            open_bound: i64::MIN,
            counters: Counters::default(),
            ticks: 0,
            trace: Vec::new(),
        }
    }

    fn remaining(&self, n: usize) -> usize {
        self.topo.depth() - self.topo.level(n)
    }

    fn threshold(&self) -> i64 {
        match self.shared {
            Some(global) => self.best.max(global.load(Ordering::Relaxed) - 1),
            None => self.best,
        }
    }

    fn tick(&mut self) {
        self.ticks += 1;
        if self.ticks.is_multiple_of(256) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.aborted = true;
        }
    }

    // ---- bounds ----

    fn leaf(&self, q: usize, counts: &[i64]) -> f64 {
        self.thetas[q].leaf_value(counts)
    }

    /// Value of the relaxation `q` for a depth-`r` subtree on `cell`, with no
    /// forced actions inside.
    fn dp(&mut self, q: usize, r: usize, cell: &Bits) -> f64 {
        let counts = self.prob.counts(cell);
        let leaf = self.leaf(q, &counts);
        if r == 0 {
            return leaf;
        }
        let key = (r, cell.clone());
        if let Some(&v) = self.memo[q].get(&key) {
            return v;
        }
        let theta = &self.thetas[q];
        let cap: f64 =
            counts.iter().enumerate().map(|(t, &c)| (c as f64 * theta.gain0[t]).max(c as f64 * theta.gain1[t])).sum();
        let mut best = leaf;
        if leaf < cap - 1e-9 {
            for f in 0..self.prob.n_features {
                let (left, right) = self.prob.split(cell, f);
                if is_empty(&left) || is_empty(&right) {
                    continue;
                }
                let v = if r == 1 {
                    let lc = self.prob.counts(&left);
                    let rc: Vec<i64> = counts.iter().zip(&lc).map(|(a, b)| a - b).collect();
                    self.leaf(q, &lc) + self.leaf(q, &rc)
                } else {
                    self.dp(q, r - 1, &left) + self.dp(q, r - 1, &right)
                };
                if v > best {
                    best = v;
                    if best >= cap - 1e-9 {
                        break;
                    }
                }
            }
        }
        self.memo[q].insert(key, best);
        best
    }

    /// Relaxed value of an undecided node, following forced actions below it.
    fn subtree_value(&mut self, q: usize, n: usize, cell: &Bits) -> f64 {
        match self.forced[n] {
            Some(Act::Branch(f)) => {
                let (l, r) = self.prob.split(cell, f);
                self.subtree_value(q, 2 * n, &l) + self.subtree_value(q, 2 * n + 1, &r)
            }
            Some(Act::Predict) => self.leaf(q, &self.prob.counts(cell)),
            None => {
                let r = self.remaining(n);
                self.dp(q, r, cell)
            }
        }
    }

    fn set_cell(&mut self, n: usize, cell: Bits) {
        let counts = self.prob.counts(&cell);
        let mut leaf = Vec::with_capacity(self.thetas.len());
        let mut open = Vec::with_capacity(self.thetas.len());
        for q in 0..self.thetas.len() {
            leaf.push(self.leaf(q, &counts));
            open.push(self.subtree_value(q, n, &cell));
        }
        self.counts[n] = counts;
        self.leaf_value[n] = leaf;
        self.open_value[n] = open;
        self.cells[n] = Some(cell);
    }

    /// Bound for the current state when nodes `< n` are decided.
    fn bound_from(&self, n: usize) -> i64 {
        let mut best = f64::INFINITY;
        for (q, theta) in self.thetas.iter().enumerate() {
            let mut v = theta.constant;
            for m in 1..=self.last {
                if self.cells[m].is_none() {
                    continue;
                }
                if m < n {
                    if self.acts[m] == Some(Act::Predict) {
                        v += self.leaf_value[m][q];
                    }
                } else {
                    v += self.open_value[m][q];
                }
            }
            best = best.min(v);
        }
        (best + 1e-6).floor() as i64
    }

    // ---- structure search ----

    fn actions(&self, n: usize) -> Vec<Act> {
        if let Some(a) = self.forced[n] {
            return vec![a];
        }
        let mut out = vec![Act::Predict];
        if self.topo.is_branch_node(n) {
            let cell = self.cells[n].as_ref().expect("decided node has a cell");
            for f in 0..self.prob.n_features {
                let mask = &self.prob.feature_masks[f];
                let ones = cell.iter().zip(mask).any(|(c, m)| c & m != 0);
                let zeros = cell.iter().zip(mask).any(|(c, m)| c & !m != 0);
                if ones && zeros {
                    out.push(Act::Branch(f));
                }
            }
        }
        out
    }

    fn apply(&mut self, n: usize, act: Act) {
        self.acts[n] = Some(act);
        if let Act::Branch(f) = act {
            let cell = self.cells[n].as_ref().expect("decided node has a cell");
            let (l, r) = self.prob.split(cell, f);
            self.set_cell(2 * n, l);
            self.set_cell(2 * n + 1, r);
        }
    }

    fn undo(&mut self, n: usize, act: Act) {
        self.acts[n] = None;
        if let Act::Branch(_) = act {
            self.cells[2 * n] = None;
            self.cells[2 * n + 1] = None;
        }
    }

    fn next_open(&self, mut n: usize) -> Option<usize> {
        while n <= self.last && self.cells[n].is_none() {
            n += 1;
        }
        (n <= self.last).then_some(n)
    }

    fn dfs(&mut self, n: usize) {
        let Some(n) = self.next_open(n) else {
            self.evaluate();
            return;
        };
        let actions = self.actions(n);
        for (i, &act) in actions.iter().enumerate() {
            if self.aborted {
                for &rest in &actions[i..] {
                    self.apply(n, rest);
                    self.open_bound = self.open_bound.max(self.bound_from(n + 1));
                    self.undo(n, rest);
                }
                return;
            }
            self.try_action(n, act);
            self.tick();
        }
    }

    fn try_action(&mut self, n: usize, act: Act) {
        self.apply(n, act);
        self.counters.nodes += 1;
        if self.bound_from(n + 1) <= self.threshold() {
            self.counters.pruned += 1;
        } else {
            self.dfs(n + 1);
        }
        self.undo(n, act);
    }

    fn predict_nodes(&self) -> Vec<usize> {
        (1..=self.last).filter(|&m| self.cells[m].is_some() && self.acts[m] == Some(Act::Predict)).collect()
    }

    /// Labels the current complete structure.
    fn evaluate(&mut self) {
        self.counters.structures += 1;
        let preds = self.predict_nodes();
        let threshold = self.threshold();
        let (found, aborted) = self.label(&preds, threshold);
        if aborted {
            self.aborted = true;
            self.open_bound = self.open_bound.max(self.bound_from(self.last + 1));
        }
        if let Some((value, labels)) = found {
            let tree = self.build_tree(&preds, &labels);
            self.accept(value, tree);
        }
    }

    fn accept(&mut self, value: i64, tree: DecisionTree) {
        self.best = value;
        self.incumbent = Some(tree);
        if let Some(global) = self.shared {
            global.fetch_max(value, Ordering::Relaxed);
        }
        let secs = self.started.elapsed().as_secs_f64();
        self.trace.push((secs, value));
        info!("incumbent {value} at {secs:.3}s");
    }

    /// Best labeling of prediction nodes `preds` above `threshold`. Empty cells
    /// are labeled 0; labels are returned for every node in `preds`.
    fn label(&mut self, preds: &[usize], threshold: i64) -> (Option<(i64, Vec<u8>)>, bool) {
        let live: Vec<usize> = (0..preds.len()).filter(|&k| self.counts[preds[k]].iter().any(|&c| c > 0)).collect();
        let leaves: Vec<LeafStats> = live.iter().map(|&k| self.prob.stats(&self.counts[preds[k]])).collect();
        let out = Labeler::new(self.prob, &leaves, &self.thetas).with_deadline(self.deadline).solve(threshold);
        self.counters.labelings += out.visited;
        let found = out.found.map(|(value, sub)| {
            let mut labels = vec![0u8; preds.len()];
            for (&k, y) in live.iter().zip(sub) {
                labels[k] = y;
            }
            (value, labels)
        });
        (found, out.aborted)
    }

    fn build_tree(&self, preds: &[usize], labels: &[u8]) -> DecisionTree {
        let mut tree = DecisionTree::empty(self.topo);
        for m in 1..=self.last {
            if self.cells[m].is_none() {
                continue;
            }
            if let Some(Act::Branch(f)) = self.acts[m] {
                tree.set(m, NodeKind::Branch { feature: f }).expect("node in range");
            }
        }
        for (&m, &y) in preds.iter().zip(labels) {
            tree.set(m, NodeKind::Predict { class: y }).expect("node in range");
        }
        tree
    }

    // ---- warm start ----

    /// Lays out a complete structure on the engine state, choosing free nodes
    /// with `pick`. Leaves the state decided so it can be labeled.
    fn layout(&mut self, pick: &mut dyn FnMut(&mut Self, usize) -> Act) {
        self.clear();
        let mut n = 1;
        while let Some(m) = self.next_open(n) {
            let act = match self.forced[m] {
                Some(a) => a,
                None if self.topo.is_terminal(m) => Act::Predict,
                None => pick(self, m),
            };
            self.apply(m, act);
            n = m + 1;
        }
    }

    fn clear(&mut self) {
        for m in 1..=self.last {
            self.cells[m] = None;
            self.acts[m] = None;
        }
        let full = self.prob.full.clone();
        self.set_cell(1, full);
    }

    /// Feature maximizing relaxation `q` at node `n`, or `Predict`.
    fn dp_choice(&mut self, q: usize, n: usize) -> Act {
        let cell = self.cells[n].clone().expect("open node has a cell");
        self.dp_choice_on(q, n, &cell)
    }

    fn dp_choice_on(&mut self, q: usize, n: usize, cell: &Bits) -> Act {
        let r = self.remaining(n);
        let mut best = self.leaf(q, &self.prob.counts(cell));
        let mut choice = Act::Predict;
        for f in 0..self.prob.n_features {
            let (l, rr) = self.prob.split(cell, f);
            if is_empty(&l) || is_empty(&rr) {
                continue;
            }
            let v = self.dp(q, r - 1, &l) + self.dp(q, r - 1, &rr);
            if v > best + 1e-9 {
                best = v;
                choice = Act::Branch(f);
            }
        }
        choice
    }

    /// Relaxed value of the subtree at `n` under multipliers `q`, adding the
    /// rate differences of its maximizing labeled tree to `diff`.
    fn argmax_value(&mut self, q: usize, n: usize, cell: &Bits, diff: &mut [f64]) -> f64 {
        let act = match self.forced[n] {
            Some(a) => a,
            None if self.topo.is_terminal(n) => Act::Predict,
            None => self.dp_choice_on(q, n, cell),
        };
        match act {
            Act::Branch(f) => {
                let (l, r) = self.prob.split(cell, f);
                self.argmax_value(q, 2 * n, &l, diff) + self.argmax_value(q, 2 * n + 1, &r, diff)
            }
            Act::Predict => {
                let stats = self.prob.stats(&self.prob.counts(cell));
                let theta = &self.thetas[q];
                let one = theta.value_one(self.prob, &stats);
                if one > stats.zeros as f64 {
                    for ((d, row), &c) in diff.iter_mut().zip(&self.prob.rows).zip(&stats.contrib) {
                        *d += c as f64 / row.scale;
                    }
                    one
                } else {
                    stats.zeros as f64
                }
            }
        }
    }

    /// Projected subgradient descent on the tree relaxation at the root,
    /// started from `start`. `lower` is the objective of a feasible tree.
    fn tune_multipliers(&mut self, start: Vec<f64>, lower: f64, iterations: usize) -> Multipliers {
        let mut theta = start;
        let mut best_value = f64::INFINITY;
        let mut best = theta.clone();
        let mut scale = 1.0;
        let mut stale = 0;
        for _ in 0..iterations {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            self.thetas.push(Multipliers::new(self.prob, theta.clone()));
            self.memo.push(HashMap::new());
            let q = self.thetas.len() - 1;
            let mut diff = vec![0.0; self.prob.rows.len()];
            let full = self.prob.full.clone();
            let value = self.thetas[q].constant + self.argmax_value(q, 1, &full, &mut diff);
            self.thetas.pop();
            self.memo.pop();

            if value < best_value - 1e-9 {
                best_value = value;
                best.clone_from(&theta);
                stale = 0;
            } else {
                stale += 1;
                if stale >= 5 {
                    scale *= 0.5;
                    stale = 0;
                }
            }
            let grad = lagrange::subgradient(self.prob, &theta, &diff);
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2 < 1e-18 || (best_value + 1e-6).floor() <= lower || scale < 1e-4 {
                break;
            }
            let size = scale * (value - lower).max(0.5) / norm2;
            lagrange::step(self.prob, &mut theta, &grad, size);
        }
        debug!("tree relaxation {best_value:.3} (feasible {lower})");
        Multipliers::new(self.prob, best)
    }

    fn label_layout(&mut self) -> Option<(i64, DecisionTree)> {
        let preds = self.predict_nodes();
        let (found, _) = self.label(&preds, -1);
        found.map(|(v, labels)| (v, self.build_tree(&preds, &labels)))
    }

    /// Objective of `tree` if it satisfies every fairness row.
    fn evaluate_tree(&mut self, tree: &DecisionTree) -> Option<i64> {
        self.layout(&mut |_, m| match tree.kind(m) {
            NodeKind::Branch { feature } => Act::Branch(feature),
            _ => Act::Predict,
        });
        let mut acc = 0;
        let mut sums = vec![0i64; self.prob.rows.len()];
        for m in self.predict_nodes() {
            let stats = self.prob.stats(&self.counts[m]);
            if tree.predicted_class(m) == Some(1) {
                acc += stats.ones;
                for (s, c) in sums.iter_mut().zip(&stats.contrib) {
                    *s += c;
                }
            } else {
                acc += stats.zeros;
            }
        }
        self.prob.rows.iter().zip(&sums).all(|(r, &s)| r.satisfied(s)).then_some(acc)
    }

    /// Builds heuristic incumbents and the Lagrangian multipliers.
    fn warm_start(&mut self, seed: Option<&DecisionTree>) -> (i64, DecisionTree) {
        fn offer(best: &mut Option<(i64, DecisionTree)>, cand: Option<(i64, DecisionTree)>) {
            if let Some((v, t)) = cand {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    *best = Some((v, t));
                }
            }
        }
        let mut best = None;
        if let Some(tree) = seed {
            let v = self.evaluate_tree(tree);
            offer(&mut best, v.map(|v| (v, tree.clone())));
        }
        self.layout(&mut |_, _| Act::Predict);
        offer(&mut best, self.label_layout());
        self.layout(&mut |e, m| e.dp_choice(0, m));
        offer(&mut best, self.label_layout());

        let lower = best.as_ref().map_or(0, |b| b.0) as f64;
        if !self.prob.rows.is_empty() {
            let root = self.prob.counts(&self.prob.full);
            let start = lagrange::optimize(self.prob, &root, lower, 300).theta;
            let iterations = if self.topo.depth() <= 2 { 150 } else { 60 };
            let theta = self.tune_multipliers(start, lower, iterations);
            if !theta.is_zero() {
                self.thetas.push(theta);
                self.memo.push(HashMap::new());
                self.layout(&mut |e, m| e.dp_choice(1, m));
                offer(&mut best, self.label_layout());
            }
        }
        self.clear();
        best.expect("the all-predict layout always has a feasible labeling")
    }
}

/// Runs the search and returns the first optimum in canonical order, or the
/// best tree found before the deadline.
pub(crate) fn run(setup: &Setup<'_>) -> Outcome {
    let mut base = Engine::new(setup);
    let (heuristic, fallback) = base.warm_start(setup.seed.as_ref());
    debug!("warm start objective {heuristic}");
    base.best = heuristic - 1;
    base.trace.push((setup.started.elapsed().as_secs_f64(), heuristic));

    let root_bound = base.bound_from(1);
    let mut counters = Counters::default();
    let (found, open_bound, aborted, mut trace) = if root_bound <= base.best {
        (None, i64::MIN, false, base.trace.clone())
    } else if setup.parallel {
        run_parallel(base, &mut counters)
    } else {
        base.dfs(1);
        counters.add(&base.counters);
        let found = base.incumbent.take().map(|t| (base.best, t));
        (found, base.open_bound, base.aborted, base.trace.clone())
    };
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (objective, tree) = match found {
        Some((v, t)) if v >= heuristic => (v, t),
        _ => (heuristic, fallback),
    };
    let bound = if aborted { objective.max(open_bound).min(root_bound.max(objective)) } else { objective };
    Outcome { tree, objective, bound, aborted: aborted && bound > objective, counters, trace }
}

type Partial = (Option<(i64, DecisionTree)>, i64, bool, Vec<(f64, i64)>);

fn run_parallel(mut base: Engine<'_>, counters: &mut Counters) -> Partial {
    // follow single-action nodes to the first real choice
    let mut n = 1;
    let (split, actions) = loop {
        let Some(m) = base.next_open(n) else {
            base.evaluate();
            counters.add(&base.counters);
            let found = base.incumbent.take().map(|t| (base.best, t));
            return (found, base.open_bound, base.aborted, base.trace.clone());
        };
        let actions = base.actions(m);
        if actions.len() > 1 {
            break (m, actions);
        }
        base.apply(m, actions[0]);
        if base.bound_from(m + 1) <= base.best {
            return (None, i64::MIN, false, base.trace.clone());
        }
        n = m + 1;
    };

    let global = AtomicI64::new(base.best + 1);
    let results: Vec<(Option<(i64, DecisionTree)>, i64, bool, Counters, Vec<(f64, i64)>)> = actions
        .par_iter()
        .map(|&act| {
            let mut e = base.clone();
            e.shared = Some(&global);
            e.trace.clear();
            e.try_action(split, act);
            (e.incumbent.take().map(|t| (e.best, t)), e.open_bound, e.aborted, e.counters, e.trace)
        })
        .collect();

    let mut found: Option<(i64, DecisionTree)> = None;
    let mut open = i64::MIN;
    let mut aborted = false;
    let mut trace = base.trace.clone();
    for (res, ob, ab, c, tr) in results {
        counters.add(&c);
        open = open.max(ob);
        aborted |= ab;
        trace.extend(tr);
        if let Some((v, t)) = res {
            if found.as_ref().is_none_or(|(b, _)| v > *b) {
                found = Some((v, t));
            }
        }
    }
    (found, open, aborted, trace)
}
