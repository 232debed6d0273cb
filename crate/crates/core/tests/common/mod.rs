#![allow(dead_code)]

use fairtree::fairness::{self, FairnessKind, FairnessSpec};
use fairtree::{Dataset, DecisionTree, NodeKind, TreeTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DELTAS: [f64; 4] = [0.0, 0.1, 0.3, 1.0];

pub const KINDS: [FairnessKind; 5] = [
    FairnessKind::StatisticalParity,
    FairnessKind::ConditionalStatisticalParity,
    FairnessKind::PredictiveEquality,
    FairnessKind::EqualOpportunity,
    FairnessKind::EqualizedOdds,
];

/// Small random instance: up to 60 rows, 5 features, 3 groups, 3 strata.
/// Features are noisy copies of the label or the group so that splits matter.
pub fn random_instance(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..=60);
    let f = rng.gen_range(1..=5);
    let groups = rng.gen_range(2..=3);
    let strata = rng.gen_range(1..=3);
    let mut protected: Vec<usize> = (0..n).map(|_| rng.gen_range(0..groups)).collect();
    protected[0] = 0;
    protected[1] = 1;
    let legit: Vec<usize> = (0..n).map(|_| rng.gen_range(0..strata)).collect();
    let group_bias: Vec<f64> = (0..groups).map(|_| rng.gen_range(0.2..0.8)).collect();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(rng.gen_bool(group_bias[protected[i]]))).collect();
    let noise: Vec<f64> = (0..f).map(|_| rng.gen_range(0.05..0.5)).collect();
    let source: Vec<u8> = (0..f).map(|_| rng.gen_range(0..3)).collect();
    let rows = (0..n)
        .map(|i| {
            (0..f)
                .map(|j| {
                    let base = match source[j] {
                        0 => labels[i],
                        1 => u8::from(protected[i] == 0),
                        _ => u8::from(legit[i] == 0),
                    };
                    if rng.gen_bool(noise[j]) {
                        1 - base
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    Dataset::new(rows, labels, protected).unwrap().with_legitimate(legit).unwrap()
}

fn structures(topo: TreeTopology, n_features: usize) -> Vec<DecisionTree> {
    fn grow(tree: DecisionTree, frontier: Vec<usize>, f: usize, out: &mut Vec<DecisionTree>) {
        let Some((&n, rest)) = frontier.split_first() else {
            out.push(tree);
            return;
        };
        let mut t = tree.clone();
        t.set(n, NodeKind::Predict { class: 0 }).unwrap();
        grow(t, rest.to_vec(), f, out);
        if !tree.topology().is_terminal(n) {
            for feature in 0..f {
                let mut t = tree.clone();
                t.set(n, NodeKind::Branch { feature }).unwrap();
                let mut next = rest.to_vec();
                next.push(2 * n);
                next.push(2 * n + 1);
                grow(t, next, f, out);
            }
        }
    }
    let mut out = Vec::new();
    grow(DecisionTree::empty(topo), vec![1], n_features, &mut out);
    out
}

/// Every valid tree of depth at most `depth`: all structures, including
/// splits on features that are constant on a cell, with every labeling.
pub fn all_trees(depth: usize, n_features: usize) -> Vec<DecisionTree> {
    let topo = TreeTopology::new(depth).unwrap();
    let mut out = Vec::new();
    for s in structures(topo, n_features) {
        let leaves = s.prediction_nodes();
        for mask in 0..(1u32 << leaves.len()) {
            let mut t = s.clone();
            for (k, &n) in leaves.iter().enumerate() {
                t = t.relabeled(n, ((mask >> k) & 1) as u8).unwrap();
            }
            out.push(t);
        }
    }
    out
}

/// Best objective among `trees` that satisfy `spec` on `data`, checked with
/// the fairness evaluator on routed predictions.
pub fn brute_force(trees: &[DecisionTree], data: &Dataset, spec: &FairnessSpec) -> usize {
    let compiled = fairness::compile(spec, data).unwrap();
    let mut best = None;
    for t in trees {
        let pred = t.predict_dataset(data).unwrap();
        if !fairness::within_bound(compiled.disparity(&pred).value, spec.delta) {
            continue;
        }
        let correct = pred.iter().zip(data.labels()).filter(|(a, b)| a == b).count();
        best = best.max(Some(correct));
    }
    best.expect("the constant tree is always feasible")
}

pub fn spec_for(kind: FairnessKind, delta: f64) -> FairnessSpec {
    FairnessSpec::absolute(kind, delta).unwrap()
}

pub fn predictions_satisfy(tree: &DecisionTree, data: &Dataset, spec: &FairnessSpec) -> bool {
    let pred = tree.predict_dataset(data).unwrap();
    fairness::check(spec, data, &pred).unwrap().satisfied
}
