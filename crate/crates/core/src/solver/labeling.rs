//! Best class assignment for a fixed set of prediction cells.
//!
//! Depth-first over leaves in breadth-first node order, label 0 before label 1,
//! so labelings are visited in binary counting order (first leaf most
//! significant) and the first optimum found is the canonical one.

use std::time::Instant;

use super::lagrange::Multipliers;
use super::problem::{LeafStats, Problem};

pub(crate) struct Labeler<'a> {
    prob: &'a Problem,
    leaves: &'a [LeafStats],
    thetas: &'a [Multipliers],
    // suffix_* [k] summarise leaves k..
    suffix_gain: Vec<i64>,
    suffix_lo: Vec<Vec<i64>>,
    suffix_hi: Vec<Vec<i64>>,
    suffix_lagrange: Vec<Vec<f64>>,
    labels: Vec<u8>,
    sums: Vec<i64>,
    best: i64,
    best_labels: Option<Vec<u8>>,
    visited: u64,
    deadline: Option<Instant>,
    aborted: bool,
}

pub(crate) struct Outcome {
    pub found: Option<(i64, Vec<u8>)>,
    pub visited: u64,
    /// The deadline passed before the search finished; `found` is the best so far.
    pub aborted: bool,
}

impl<'a> Labeler<'a> {
    pub fn new(prob: &'a Problem, leaves: &'a [LeafStats], thetas: &'a [Multipliers]) -> Self {
        let l = leaves.len();
        let m = prob.rows.len();
        let mut suffix_gain = vec![0; l + 1];
        let mut suffix_lo = vec![vec![0; m]; l + 1];
        let mut suffix_hi = vec![vec![0; m]; l + 1];
        let mut suffix_lagrange = vec![vec![0.0; thetas.len()]; l + 1];
        for k in (0..l).rev() {
            let leaf = &leaves[k];
            suffix_gain[k] = suffix_gain[k + 1] + leaf.zeros.max(leaf.ones);
            for j in 0..m {
                suffix_lo[k][j] = suffix_lo[k + 1][j] + leaf.contrib[j].min(0);
                suffix_hi[k][j] = suffix_hi[k + 1][j] + leaf.contrib[j].max(0);
            }
            for (q, theta) in thetas.iter().enumerate() {
                let v = (leaf.zeros as f64).max(theta.value_one(prob, leaf));
                suffix_lagrange[k][q] = suffix_lagrange[k + 1][q] + v;
            }
        }
        Self {
            prob,
            leaves,
            thetas,
            suffix_gain,
            suffix_lo,
            suffix_hi,
            suffix_lagrange,
            labels: vec![0; l],
            sums: vec![0; m],
            best: 0,
            best_labels: None,
            visited: 0,
            deadline: None,
            aborted: false,
        }
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    /// Best feasible labeling with objective strictly above `threshold`.
    pub fn solve(mut self, threshold: i64) -> Outcome {
        self.best = threshold;
        self.dfs(0, 0);
        Outcome { found: self.best_labels.map(|l| (self.best, l)), visited: self.visited, aborted: self.aborted }
    }

    fn can_reach(&self, k: usize) -> bool {
        self.prob.rows.iter().enumerate().all(|(j, row)| {
            let lo = (self.sums[j] + self.suffix_lo[k][j]) as f64;
            let hi = (self.sums[j] + self.suffix_hi[k][j]) as f64;
            lo <= row.limit && (!row.two_sided || hi >= -row.limit)
        })
    }

    fn bound(&self, k: usize, acc: i64) -> i64 {
        let mut b = acc + self.suffix_gain[k];
        for (q, theta) in self.thetas.iter().enumerate() {
            if theta.is_zero() {
                continue;
            }
            let v = acc as f64 - theta.penalty(self.prob, &self.sums) + theta.constant + self.suffix_lagrange[k][q];
            b = b.min((v + 1e-6).floor() as i64);
        }
        b
    }

    fn dfs(&mut self, k: usize, acc: i64) {
        if self.aborted {
            return;
        }
        self.visited += 1;
        if self.visited.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.aborted = true;
            return;
        }
        if k == self.leaves.len() {
            if acc > self.best && self.prob.rows.iter().zip(&self.sums).all(|(r, &s)| r.satisfied(s)) {
                self.best = acc;
                self.best_labels = Some(self.labels.clone());
            }
            return;
        }
        if self.bound(k, acc) <= self.best || !self.can_reach(k) {
            return;
        }
        let leaf = &self.leaves[k];
        self.labels[k] = 0;
        self.dfs(k + 1, acc + leaf.zeros);
        self.labels[k] = 1;
        for (s, c) in self.sums.iter_mut().zip(&leaf.contrib) {
            *s += c;
        }
        self.dfs(k + 1, acc + leaf.ones);
        for (s, c) in self.sums.iter_mut().zip(&leaf.contrib) {
            *s -= c;
        }
        self.labels[k] = 0;
    }
}
