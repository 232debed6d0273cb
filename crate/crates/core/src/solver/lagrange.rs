//! Lagrangian relaxation of the fairness rows.
//!
//! For multipliers `theta` (one per row, in rate units; non-negative for
//! one-sided rows) any feasible labeling satisfies
//!
//! ```text
//! correct <= correct - sum_j theta_j * diff_j + sum_j |theta_j| * bound_j
//! ```
//!
//! The right-hand side decomposes over datapoints: a point of type `t` gains
//! `[y_t = 0]` when predicted 0 and `[y_t = 1] - sum_j theta_j * coef_jt` when
//! predicted 1. Maximising it over trees without fairness rows therefore gives
//! an admissible bound for every choice of `theta`.

use super::problem::{LeafStats, Problem};

#[derive(Debug, Clone)]
pub(crate) struct Multipliers {
    pub theta: Vec<f64>,
    pub gain0: Vec<f64>,
    pub gain1: Vec<f64>,
    pub constant: f64,
}

impl Multipliers {
    pub fn zero(prob: &Problem) -> Self {
        Self::new(prob, vec![0.0; prob.rows.len()])
    }

    pub fn new(prob: &Problem, theta: Vec<f64>) -> Self {
        let gain0 = prob.type_label.iter().map(|&y| f64::from(y == 0)).collect();
        let gain1 = (0..prob.n_types())
            .map(|t| {
                let penalty: f64 =
                    prob.rows.iter().zip(&theta).map(|(row, th)| th * row.coef[t] as f64 / row.scale).sum();
                f64::from(prob.type_label[t] == 1) - penalty
            })
            .collect();
        let constant = prob.rows.iter().zip(&theta).map(|(row, th)| th.abs() * row.limit / row.scale).sum();
        Self { theta, gain0, gain1, constant }
    }

    pub fn is_zero(&self) -> bool {
        self.theta.iter().all(|&t| t == 0.0)
    }

    /// Best relaxed value of a single leaf holding `counts`.
    pub fn leaf_value(&self, counts: &[i64]) -> f64 {
        let (mut v0, mut v1) = (0.0, 0.0);
        for (t, &c) in counts.iter().enumerate() {
            v0 += c as f64 * self.gain0[t];
            v1 += c as f64 * self.gain1[t];
        }
        v0.max(v1)
    }

    /// Relaxed value of predicting 1 on a leaf, from its stats.
    pub fn value_one(&self, prob: &Problem, stats: &LeafStats) -> f64 {
        let penalty: f64 = prob
            .rows
            .iter()
            .zip(&self.theta)
            .zip(&stats.contrib)
            .map(|((row, th), &c)| th * c as f64 / row.scale)
            .sum();
        stats.ones as f64 - penalty
    }

    /// Relaxed value of `-sum_j theta_j * diff_j` for scaled sums.
    pub fn penalty(&self, prob: &Problem, sums: &[i64]) -> f64 {
        prob.rows.iter().zip(&self.theta).zip(sums).map(|((row, th), &s)| th * s as f64 / row.scale).sum()
    }
}

/// Chooses multipliers minimising the relaxation in which every datapoint is
/// labeled freely, by projected subgradient descent with Polyak steps.
/// `lower` is the objective of any known feasible solution.
pub(crate) fn optimize(prob: &Problem, root_counts: &[i64], lower: f64, iterations: usize) -> Multipliers {
    let m = prob.rows.len();
    if m == 0 {
        return Multipliers::zero(prob);
    }
    let evaluate = |theta: &[f64]| -> (f64, Vec<f64>) {
        let mult = Multipliers::new(prob, theta.to_vec());
        let mut value = mult.constant;
        // diff_j of the relaxed optimum
        let mut diff = vec![0.0; m];
        for (t, &c) in root_counts.iter().enumerate() {
            let (v0, v1) = (c as f64 * mult.gain0[t], c as f64 * mult.gain1[t]);
            if v1 > v0 {
                value += v1;
                for (j, row) in prob.rows.iter().enumerate() {
                    diff[j] += c as f64 * row.coef[t] as f64 / row.scale;
                }
            } else {
                value += v0;
            }
        }
        let grad = subgradient(prob, theta, &diff);
        (value, grad)
    };

    let mut theta = vec![0.0; m];
    let (mut best_value, _) = evaluate(&theta);
    let mut best = theta.clone();
    let mut scale = 1.0;
    let mut stale = 0;
    for _ in 0..iterations {
        let (value, grad) = evaluate(&theta);
        if value < best_value - 1e-12 {
            best_value = value;
            best.clone_from(&theta);
            stale = 0;
        } else {
            stale += 1;
            if stale >= 15 {
                scale *= 0.5;
                stale = 0;
            }
        }
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2 < 1e-18 || value - lower < 1e-9 || scale < 1e-6 {
            break;
        }
        let size = scale * (value - lower).max(1.0) / norm2;
        step(prob, &mut theta, &grad, size);
    }
    Multipliers::new(prob, best)
}

/// Subgradient of the relaxation at `theta` given the rate differences `diff`
/// of the maximizing solution.
pub(crate) fn subgradient(prob: &Problem, theta: &[f64], diff: &[f64]) -> Vec<f64> {
    prob.rows
        .iter()
        .zip(theta)
        .zip(diff)
        .map(|((row, &th), &d)| {
            let limit = row.limit / row.scale;
            if th > 0.0 || (th == 0.0 && !row.two_sided) {
                limit - d
            } else if th < 0.0 {
                -limit - d
            } else if d.abs() <= limit {
                0.0
            } else {
                -d + limit * d.signum()
            }
        })
        .collect()
}

/// Moves `theta` against `grad` and projects one-sided rows onto `theta >= 0`.
pub(crate) fn step(prob: &Problem, theta: &mut [f64], grad: &[f64], step: f64) {
    for ((t, g), row) in theta.iter_mut().zip(grad).zip(&prob.rows) {
        *t -= step * g;
        if !row.two_sided && *t < 0.0 {
            *t = 0.0;
        }
    }
}
