//! Information-gain trees and leaf relabeling.
//!
//! [`cart_build`] grows a tree top-down, scoring splits by label entropy gain
//! (IGC), optionally plus or minus protected-attribute entropy gain (IGS).
//! [`relabel`] then flips leaf classes until one-sided statistical parity
//! holds on the training data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessKind, FairnessSpec, Mode};
use crate::tree::{DecisionTree, NodeId, NodeKind, TreeTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Igc,
    IgcPlusIgs,
    IgcMinusIgs,
}

impl SplitCriterion {
    pub const ALL: [SplitCriterion; 3] = [SplitCriterion::Igc, SplitCriterion::IgcPlusIgs, SplitCriterion::IgcMinusIgs];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitCriterion::Igc => "igc",
            SplitCriterion::IgcPlusIgs => "igc_plus_igs",
            SplitCriterion::IgcMinusIgs => "igc_minus_igs",
        }
    }

    pub fn score(&self, igc: f64, igs: f64) -> f64 {
        match self {
            SplitCriterion::Igc => igc,
            SplitCriterion::IgcPlusIgs => igc + igs,
            SplitCriterion::IgcMinusIgs => igc - igs,
        }
    }
}

impl fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "igc" => Ok(SplitCriterion::Igc),
            "igc_plus_igs" | "igc+igs" => Ok(SplitCriterion::IgcPlusIgs),
            "igc_minus_igs" | "igc_igs" => Ok(SplitCriterion::IgcMinusIgs),
            other => Err(Error::Config(format!("unknown split criterion `{other}`"))),
        }
    }
}

/// Shannon entropy (bits) of a count vector.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn gain(parent: &[usize], left: &[usize], right: &[usize]) -> f64 {
    let n = parent.iter().sum::<usize>() as f64;
    let (nl, nr) = (left.iter().sum::<usize>() as f64, right.iter().sum::<usize>() as f64);
    entropy(parent) - nl / n * entropy(left) - nr / n * entropy(right)
}

/// Label and protected-attribute gains of splitting `rows` on `feature`.
pub fn split_gains(data: &Dataset, rows: &[usize], feature: usize) -> (f64, f64) {
    let g = data.n_groups();
    let (mut yl, mut yr) = ([0usize; 2], [0usize; 2]);
    let (mut gl, mut gr) = (vec![0usize; g], vec![0usize; g]);
    for &i in rows {
        if data.feature(i, feature) == 0 {
            yl[data.label(i) as usize] += 1;
            gl[data.group(i)] += 1;
        } else {
            yr[data.label(i) as usize] += 1;
            gr[data.group(i)] += 1;
        }
    }
    let y = [yl[0] + yr[0], yl[1] + yr[1]];
    let gp: Vec<usize> = gl.iter().zip(&gr).map(|(a, b)| a + b).collect();
    (gain(&y, &yl, &yr), gain(&gp, &gl, &gr))
}

/// Greedy top-down induction to depth `depth`.
///
/// Each node takes the feature with the largest positive score (ties to the
/// lowest index) and becomes a prediction node when it reaches the depth limit,
/// its labels are pure, or no split scores above zero. Leaves predict the
/// majority class of their cell, 0 on ties and on empty cells.
pub fn cart_build(data: &Dataset, depth: usize, criterion: SplitCriterion) -> Result<DecisionTree> {
    let topo = TreeTopology::new(depth)?;
    let mut tree = DecisionTree::empty(topo);
    let mut stack = vec![(1usize, (0..data.len()).collect::<Vec<_>>())];
    while let Some((n, rows)) = stack.pop() {
        let ones = rows.iter().filter(|&&i| data.label(i) == 1).count();
        let pure = ones == 0 || ones == rows.len();
        let mut best: Option<(usize, f64)> = None;
        if topo.is_branch_node(n) && !pure {
            for f in 0..data.n_features() {
                let (igc, igs) = split_gains(data, &rows, f);
                let score = criterion.score(igc, igs);
                if score > 1e-12 && best.is_none_or(|(_, s)| score > s + 1e-12) {
                    best = Some((f, score));
                }
            }
        }
        match best {
            Some((f, _)) => {
                tree.set(n, NodeKind::Branch { feature: f })?;
                let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.feature(i, f) == 0);
                stack.push((2 * n + 1, right));
                stack.push((2 * n, left));
            }
            None => tree.set(n, NodeKind::Predict { class: u8::from(2 * ones > rows.len()) })?,
        }
    }
    Ok(tree)
}

/// One leaf flip made by [`relabel_trace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelabelStep {
    pub node: NodeId,
    pub new_class: u8,
    /// One-sided discrimination after the flip.
    pub discrimination: f64,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relabeled {
    pub tree: DecisionTree,
    pub initial_discrimination: f64,
    pub steps: Vec<RelabelStep>,
}

/// [`relabel_trace`] returning only the tree.
pub fn relabel(tree: &DecisionTree, data: &Dataset, spec: &FairnessSpec) -> Result<DecisionTree> {
    Ok(relabel_trace(tree, data, spec)?.tree)
}

/// Flips leaf classes until `rate(dominant) - rate(marginalized) <= delta`.
///
/// Only flips that strictly lower the discrimination are candidates. Flips that
/// do not lose training accuracy go first, largest reduction first; after that
/// the flip with the largest reduction per lost correct prediction is taken.
/// Ties go to the lowest node id. Once no candidate is left the discrimination
/// is at most zero, so the loop always reaches the bound.
pub fn relabel_trace(tree: &DecisionTree, data: &Dataset, spec: &FairnessSpec) -> Result<Relabeled> {
    let Mode::OneSided { dominant, marginalized } = &spec.mode else {
        return Err(Error::Config("relabeling supports only one-sided statistical parity".into()));
    };
    if spec.kind != FairnessKind::StatisticalParity {
        return Err(Error::Config(format!("relabeling supports only statistical parity, not {}", spec.kind)));
    }
    let dom = data.group_index(dominant).ok_or_else(|| Error::Config(format!("unknown group `{dominant}`")))?;
    let marg =
        data.group_index(marginalized).ok_or_else(|| Error::Config(format!("unknown group `{marginalized}`")))?;
    let sizes = data.group_sizes();
    if sizes[dom] == 0 || sizes[marg] == 0 {
        return Err(Error::Dataset("both compared groups need training rows".into()));
    }

    let leaves = tree.prediction_nodes();
    let routed = tree.route_dataset(data)?;
    // per leaf: (share of dominant - share of marginalized, #label 1, #label 0)
    let mut weight = vec![0.0; leaves.len()];
    let mut pos = vec![0usize; leaves.len()];
    let mut neg = vec![0usize; leaves.len()];
    for (i, n) in routed.iter().enumerate() {
        let k = leaves.binary_search(n).expect("routing ends at a prediction node");
        let g = data.group(i);
        if g == dom {
            weight[k] += 1.0 / sizes[dom] as f64;
        } else if g == marg {
            weight[k] -= 1.0 / sizes[marg] as f64;
        }
        if data.label(i) == 1 {
            pos[k] += 1;
        } else {
            neg[k] += 1;
        }
    }

    let mut out = tree.clone();
    let discrimination =
        |t: &DecisionTree| -> Result<f64> { Ok(fairness::disparity(spec, data, &t.predict_dataset(data)?)?.value) };
    let initial = discrimination(&out)?;
    let mut disc = initial;
    let mut steps = Vec::new();
    while !fairness::within_bound(disc, spec.delta) {
        // (priority, key, index): priority 0 for flips without accuracy loss
        let mut pick: Option<(u8, f64, usize)> = None;
        for (k, &n) in leaves.iter().enumerate() {
            let class = out.predicted_class(n).expect("leaf");
            let (reduction, loss) = if class == 1 {
                (weight[k], pos[k] as f64 - neg[k] as f64)
            } else {
                (-weight[k], neg[k] as f64 - pos[k] as f64)
            };
            if reduction <= 1e-12 {
                continue;
            }
            let cand = if loss <= 0.0 { (0, reduction, k) } else { (1, reduction / loss, k) };
            let better = match pick {
                None => true,
                Some((p, key, _)) => cand.0 < p || (cand.0 == p && cand.1 > key + 1e-12),
            };
            if better {
                pick = Some(cand);
            }
        }
        let Some((_, _, k)) = pick else {
            break;
        };
        let n = leaves[k];
        let new_class = 1 - out.predicted_class(n).expect("leaf");
        out = out.relabeled(n, new_class)?;
        disc = discrimination(&out)?;
        steps.push(RelabelStep { node: n, new_class, discrimination: disc, correct: out.correct_count(data)? });
    }
    Ok(Relabeled { tree: out, initial_discrimination: initial, steps })
}
