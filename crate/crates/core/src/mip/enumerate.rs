//! Exact optimization of pure 0-1 models by depth-first enumeration with
//! bound propagation.

use std::time::Instant;

use crate::error::{Error, Result};

use super::model::{MipModel, RowSense};

const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    /// Best assignment found; `None` when the model is infeasible (or nothing
    /// was found before the deadline).
    pub best: Option<BinarySolution>,
    /// Search nodes visited.
    pub nodes: u64,
    /// `true` when the deadline stopped the search, so `best` may not be optimal.
    pub aborted: bool,
}

struct LeRow {
    terms: Vec<(usize, f64)>,
    rhs: f64,
    max_abs: f64,
}

struct State<'a> {
    rows: Vec<LeRow>,
    occurs: Vec<Vec<(usize, f64)>>,
    objective: Vec<f64>,
    /// -1 free, else the fixed value
    value: Vec<i8>,
    min_act: Vec<f64>,
    upper_obj: f64,
    trail: Vec<usize>,
    queue: Vec<usize>,
    best: Option<BinarySolution>,
    nodes: u64,
    deadline: Option<Instant>,
    aborted: bool,
    model: &'a MipModel,
}

impl State<'_> {
    fn assign(&mut self, v: usize, val: i8) -> bool {
        debug_assert_eq!(self.value[v], -1);
        self.value[v] = val;
        self.trail.push(v);
        let c = self.objective[v];
        self.upper_obj += c * f64::from(val) - c.max(0.0);
        let mut ok = true;
        for k in 0..self.occurs[v].len() {
            let (r, a) = self.occurs[v][k];
            self.min_act[r] += a * f64::from(val) - a.min(0.0);
            if self.min_act[r] > self.rows[r].rhs + FEAS_TOL {
                ok = false;
            }
        }
        self.queue.push(v);
        ok
    }

    fn unassign_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().expect("nonempty");
            let val = f64::from(self.value[v]);
            let c = self.objective[v];
            self.upper_obj -= c * val - c.max(0.0);
            for &(r, a) in &self.occurs[v] {
                self.min_act[r] -= a * val - a.min(0.0);
            }
            self.value[v] = -1;
        }
    }

    fn propagate(&mut self) -> bool {
        while let Some(v) = self.queue.pop() {
            for k in 0..self.occurs[v].len() {
                let r = self.occurs[v][k].0;
                let slack = self.rows[r].rhs - self.min_act[r];
                if slack < -FEAS_TOL {
                    self.queue.clear();
                    return false;
                }
                if self.rows[r].max_abs <= slack + FEAS_TOL {
                    continue;
                }
                for t in 0..self.rows[r].terms.len() {
                    let (u, a) = self.rows[r].terms[t];
                    if self.value[u] != -1 || a.abs() <= self.rows[r].rhs - self.min_act[r] + FEAS_TOL {
                        continue;
                    }
                    let forced = if a > 0.0 { 0 } else { 1 };
                    if !self.assign(u, forced) {
                        self.queue.clear();
                        return false;
                    }
                }
            }
        }
        true
    }

    fn dfs(&mut self, from: usize) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.aborted = true;
        }
        if self.aborted {
            return;
        }
        if let Some(b) = &self.best {
            if self.upper_obj <= b.objective + FEAS_TOL {
                return;
            }
        }
        let Some(v) = (from..self.value.len()).find(|&v| self.value[v] == -1) else {
            let values: Vec<f64> = self.value.iter().map(|&x| f64::from(x)).collect();
            debug_assert!(self.model.violated_row(&values, 1e-6).is_none());
            self.best = Some(BinarySolution { objective: self.upper_obj, values });
            return;
        };
        let first: i8 = if self.objective[v] < 0.0 { 0 } else { 1 };
        for val in [first, 1 - first] {
            let mark = self.trail.len();
            if self.assign(v, val) && self.propagate() {
                self.dfs(v + 1);
            }
            self.queue.clear();
            self.unassign_to(mark);
            if self.aborted {
                return;
            }
        }
    }
}

/// Maximizes (or minimizes) a model whose variables are all binary.
///
/// Variables are branched on in declaration order, trying the value that
/// favours the objective first. The result is exact unless `deadline` passes.
pub fn solve_binary(model: &MipModel, deadline: Option<Instant>) -> Result<EnumerationResult> {
    if let Some(v) = model.variables.iter().find(|v| !v.binary) {
        return Err(Error::Argument(format!("variable `{}` is not binary", v.name)));
    }
    let sign = if model.minimize { -1.0 } else { 1.0 };
    let n = model.variables.len();
    let mut objective = vec![0.0; n];
    for &(v, c) in &model.objective {
        objective[v] += sign * c;
    }
    let mut rows = Vec::new();
    for r in &model.rows {
        let mut push = |flip: f64| {
            let terms: Vec<(usize, f64)> = r.terms.iter().map(|&(v, c)| (v, flip * c)).collect();
            let max_abs = terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs()));
            rows.push(LeRow { terms, rhs: flip * r.rhs, max_abs });
        };
        match r.sense {
            RowSense::Le => push(1.0),
            RowSense::Ge => push(-1.0),
            RowSense::Eq => {
                push(1.0);
                push(-1.0);
            }
        }
    }
    let mut occurs = vec![Vec::new(); n];
    for (k, r) in rows.iter().enumerate() {
        for &(v, a) in &r.terms {
            occurs[v].push((k, a));
        }
    }
    let min_act = rows.iter().map(|r| r.terms.iter().map(|t| t.1.min(0.0)).sum()).collect();
    let upper_obj = objective.iter().map(|c: &f64| c.max(0.0)).sum();
    let mut state = State {
        rows,
        occurs,
        objective,
        value: vec![-1; n],
        min_act,
        upper_obj,
        trail: Vec::new(),
        queue: Vec::new(),
        best: None,
        nodes: 0,
        deadline,
        aborted: false,
        model,
    };

    let infeasible = |nodes| EnumerationResult { best: None, nodes, aborted: false };
    if state.rows.iter().enumerate().any(|(r, row)| state.min_act[r] > row.rhs + FEAS_TOL) {
        return Ok(infeasible(0));
    }
    for (v, var) in model.variables.iter().enumerate() {
        let (lo, hi) = (var.lower.max(0.0).ceil(), var.upper.min(1.0).floor());
        if lo > hi {
            return Ok(infeasible(0));
        }
        if lo == hi && !state.assign(v, lo as i8) {
            return Ok(infeasible(0));
        }
    }
    // rows with no fixed variable can still force values
    for v in 0..n {
        if !state.occurs[v].is_empty() {
            state.queue.push(v);
        }
    }
    if !state.propagate() {
        return Ok(infeasible(0));
    }
    state.dfs(0);
    let best = state.best.map(|mut b| {
        b.objective *= sign;
        b
    });
    Ok(EnumerationResult { best, nodes: state.nodes, aborted: state.aborted })
}
