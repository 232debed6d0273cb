mod common;

use std::collections::BTreeMap;

use common::{all_trees, brute_force, predictions_satisfy, random_instance, spec_for, DELTAS, KINDS};
use fairtree::fairness::{FairnessKind, FairnessSpec};
use fairtree::solver::{self, label_leaves, upper_bound, PartialNode, PartialTree, SolveOptions, SolveStatus};
use fairtree::{Dataset, DecisionTree, TreeTopology};
use proptest::prelude::*;

fn opts(depth: usize) -> SolveOptions {
    SolveOptions::new(depth).with_time_limit(60.0)
}

#[test]
fn separable_feature_gives_perfect_depth_one_tree() {
    let rows = vec![vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0], vec![1, 1]];
    let labels = vec![0, 1, 0, 1, 1];
    let data = Dataset::new(rows, labels, vec![0, 0, 1, 1, 1]).unwrap();
    let res = solver::solve(&data, &FairnessSpec::none(), &opts(1)).unwrap();
    assert_eq!(res.objective, 5);
    assert_eq!(res.status, SolveStatus::Optimal);
    assert_eq!(res.tree.branch_feature(1), Some(0));
}

#[test]
fn matches_brute_force_on_random_instances() {
    for seed in 0..12 {
        let data = random_instance(seed);
        let trees = all_trees(2, data.n_features());
        for kind in KINDS {
            for delta in DELTAS {
                let spec = spec_for(kind, delta);
                let res = solver::solve(&data, &spec, &opts(2)).unwrap();
                let oracle = brute_force(&trees, &data, &spec);
                assert_eq!(res.objective, oracle, "seed {seed} {kind} delta {delta}");
                assert_eq!(res.status, SolveStatus::Optimal);
                assert_eq!(res.bound, res.objective);
                assert!(res.tree.is_valid());
                assert_eq!(res.tree.correct_count(&data).unwrap(), res.objective);
                assert!(predictions_satisfy(&res.tree, &data, &spec));
            }
        }
    }
}

#[test]
fn one_sided_constraints_match_brute_force() {
    for seed in 100..110 {
        let data = random_instance(seed);
        let trees = all_trees(2, data.n_features());
        for kind in KINDS {
            for delta in [0.0, 0.05, 0.2] {
                let spec = FairnessSpec::one_sided(kind, delta, "g1", "g0").unwrap();
                let res = solver::solve(&data, &spec, &opts(2)).unwrap();
                assert_eq!(res.objective, brute_force(&trees, &data, &spec), "seed {seed} {kind} delta {delta}");
                assert!(predictions_satisfy(&res.tree, &data, &spec));
            }
        }
    }
}

#[test]
fn depth_three_matches_brute_force_on_tiny_instances() {
    let trees_by_f: Vec<Vec<DecisionTree>> = (0..=3).map(|f| if f == 0 { vec![] } else { all_trees(3, f) }).collect();
    for seed in 200..206 {
        let mut data = random_instance(seed);
        if data.n_features() > 3 {
            let rows = (0..data.len()).map(|i| data.row(i)[..3].to_vec()).collect();
            data = Dataset::new(rows, data.labels().to_vec(), data.protected().to_vec())
                .unwrap()
                .with_legitimate(data.legitimate().unwrap().to_vec())
                .unwrap();
        }
        let trees = &trees_by_f[data.n_features()];
        for kind in [FairnessKind::StatisticalParity, FairnessKind::EqualizedOdds] {
            let spec = spec_for(kind, 0.05);
            let res = solver::solve(&data, &spec, &opts(3)).unwrap();
            assert_eq!(res.objective, brute_force(trees, &data, &spec), "seed {seed} {kind}");
        }
    }
}

#[test]
fn sequential_runs_are_identical_and_parallel_agrees() {
    let data = random_instance(7);
    let spec = spec_for(FairnessKind::EqualizedOdds, 0.1);
    let a = solver::solve(&data, &spec, &opts(2)).unwrap();
    let b = solver::solve(&data, &spec, &opts(2)).unwrap();
    assert_eq!(a.tree, b.tree);
    assert_eq!((a.objective, a.bound, a.status), (b.objective, b.bound, b.status));
    assert_eq!((a.stats.nodes, a.stats.pruned), (b.stats.nodes, b.stats.pruned));
    let p = solver::solve(&data, &spec, &opts(2).with_parallel(true)).unwrap();
    assert_eq!((p.objective, p.bound, p.status), (a.objective, a.bound, a.status));
    // with no time limit hit the canonical optimum is recovered
    assert_eq!(p.tree, a.tree);
}

#[test]
fn tiny_time_limit_still_returns_feasible_tree_with_valid_bound() {
    let data = random_instance(3);
    let spec = spec_for(FairnessKind::StatisticalParity, 0.05);
    let res = solver::solve(&data, &spec, &opts(3).with_time_limit(1e-9)).unwrap();
    assert!(res.objective <= res.bound);
    assert_eq!(res.objective == res.bound, res.status == SolveStatus::Optimal);
    assert!(predictions_satisfy(&res.tree, &data, &spec));
    let exact = solver::solve(&data, &spec, &opts(3)).unwrap();
    assert!(res.bound >= exact.objective);
}

#[test]
fn rejects_bad_options() {
    let data = random_instance(1);
    assert!(solver::solve(&data, &FairnessSpec::none(), &SolveOptions::new(0)).is_err());
    assert!(solver::solve(&data, &FairnessSpec::none(), &opts(2).with_time_limit(0.0)).is_err());
    assert!(solver::greedy_deepen(&data, &FairnessSpec::none(), 3, 2, &opts(2)).is_err());
}

#[test]
fn greedy_extension_never_loses_accuracy() {
    for seed in 0..6 {
        let data = random_instance(seed);
        for kind in KINDS {
            let spec = spec_for(kind, 0.1);
            let exact1 = solver::solve(&data, &spec, &opts(1)).unwrap();
            let chain = solver::greedy_chain(&data, &spec, 1, 3, &opts(3)).unwrap();
            assert_eq!(chain.len(), 3);
            assert_eq!(chain[0].objective, exact1.objective);
            for w in chain.windows(2) {
                assert!(w[1].objective >= w[0].objective);
                // earlier splits are kept
                for n in w[0].tree.topology().nodes() {
                    if let Some(f) = w[0].tree.branch_feature(n) {
                        assert_eq!(w[1].tree.branch_feature(n), Some(f));
                    }
                }
            }
            for r in &chain {
                assert!(r.tree.is_valid());
                assert!(predictions_satisfy(&r.tree, &data, &spec));
                assert_eq!(r.tree.correct_count(&data).unwrap(), r.objective);
            }
            let exact2 = solver::solve(&data, &spec, &opts(2)).unwrap();
            assert!(chain[1].objective <= exact2.objective);
        }
    }
}

#[test]
fn greedy_with_equal_depths_is_exact_solve() {
    let data = random_instance(4);
    let spec = spec_for(FairnessKind::PredictiveEquality, 0.1);
    let g = solver::greedy_deepen(&data, &spec, 2, 2, &opts(2)).unwrap();
    let e = solver::solve(&data, &spec, &opts(2)).unwrap();
    assert_eq!(g.tree, e.tree);
    assert_eq!(g.objective, e.objective);
}

fn enumerate_labelings(partition: &BTreeMap<usize, Vec<usize>>, data: &Dataset, spec: &FairnessSpec) -> Option<usize> {
    let nodes: Vec<usize> = partition.keys().copied().collect();
    let mut best = None;
    for mask in 0..(1u32 << nodes.len()) {
        let mut pred = vec![0u8; data.len()];
        for (k, n) in nodes.iter().enumerate() {
            for &i in &partition[n] {
                pred[i] = ((mask >> k) & 1) as u8;
            }
        }
        if fairtree::fairness::check(spec, data, &pred).unwrap().satisfied {
            let c = pred.iter().zip(data.labels()).filter(|(a, b)| a == b).count();
            best = best.max(Some(c));
        }
    }
    best
}

#[test]
fn label_leaves_single_node_is_majority() {
    let data = random_instance(9);
    let part = BTreeMap::from([(1, (0..data.len()).collect::<Vec<_>>())]);
    let spec = spec_for(FairnessKind::EqualizedOdds, 0.0);
    let lab = label_leaves(&part, &spec, &data).unwrap().unwrap();
    let ones = data.labels().iter().filter(|&&y| y == 1).count();
    let majority = u8::from(ones > data.len() - ones);
    assert_eq!(lab.labels[&1], majority);
    assert_eq!(lab.objective, ones.max(data.len() - ones));
}

#[test]
fn label_leaves_rejects_bad_partitions() {
    let data = random_instance(9);
    let spec = FairnessSpec::none();
    let missing = BTreeMap::from([(1, vec![0])]);
    assert!(label_leaves(&missing, &spec, &data).is_err());
    let twice = BTreeMap::from([(2, (0..data.len()).collect()), (3, vec![0])]);
    assert!(label_leaves(&twice, &spec, &data).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn label_leaves_matches_enumeration(seed in 0u64..10_000, kind_idx in 0usize..5, delta_idx in 0usize..3, assign in proptest::collection::vec(0usize..4, 60)) {
        let data = random_instance(seed);
        let mut partition: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..data.len() {
            partition.entry(4 + assign[i]).or_default().push(i);
        }
        let spec = spec_for(KINDS[kind_idx], [0.0, 0.1, 0.3][delta_idx]);
        let got = label_leaves(&partition, &spec, &data).unwrap();
        let want = enumerate_labelings(&partition, &data, &spec);
        prop_assert_eq!(got.as_ref().map(|l| l.objective), want);
        let lab = got.unwrap();
        let mut pred = vec![0u8; data.len()];
        for (n, members) in &partition {
            for &i in members {
                pred[i] = lab.labels[n];
            }
        }
        prop_assert!(fairtree::fairness::check(&spec, &data, &pred).unwrap().satisfied);
    }

    #[test]
    fn optimal_objective_is_monotone_in_delta(seed in 0u64..10_000, kind_idx in 0usize..5) {
        let data = random_instance(seed);
        let mut last = 0;
        for delta in [0.0, 0.05, 0.1, 0.2, 0.3, 0.6, 1.0] {
            let res = solver::solve(&data, &spec_for(KINDS[kind_idx], delta), &opts(2)).unwrap();
            prop_assert!(res.objective >= last);
            prop_assert_ne!(res.status, SolveStatus::Infeasible);
            last = res.objective;
        }
        let free = solver::solve(&data, &FairnessSpec::none(), &opts(2)).unwrap();
        prop_assert_eq!(last, free.objective);
    }

    #[test]
    fn upper_bound_is_admissible(seed in 0u64..10_000, f1 in 0usize..5, f2 in 0usize..5, shape in 0usize..4) {
        let data = random_instance(seed);
        let nf = data.n_features();
        let topo = TreeTopology::new(2).unwrap();
        let mut partial = PartialTree::open(topo);
        partial.nodes[1] = PartialNode::Branch { feature: f1 % nf };
        partial.nodes[2] = if shape & 1 == 0 { PartialNode::Open } else { PartialNode::Predict };
        partial.nodes[3] = if shape & 2 == 0 { PartialNode::Open } else { PartialNode::Branch { feature: f2 % nf } };
        if shape & 2 != 0 {
            partial.nodes[6] = PartialNode::Predict;
            partial.nodes[7] = PartialNode::Predict;
        }
        let bound = upper_bound(&partial, &data).unwrap();
        // best completion: enumerate every full tree consistent with the partial one
        let mut best = 0;
        for t in all_trees(2, nf) {
            let consistent = (1..=topo.num_nodes()).all(|n| match partial.nodes[n] {
                PartialNode::Branch { feature } => t.branch_feature(n) == Some(feature),
                PartialNode::Predict => t.is_prediction(n),
                _ => true,
            });
            if consistent {
                best = best.max(t.correct_count(&data).unwrap());
            }
        }
        prop_assert!(bound >= best);
    }
}

#[test]
fn upper_bound_trivial_cases() {
    let data = random_instance(5);
    let topo = TreeTopology::new(2).unwrap();
    assert_eq!(upper_bound(&PartialTree::open(topo), &data).unwrap(), data.len());
    let mut p = PartialTree::open(topo);
    p.nodes[1] = PartialNode::Predict;
    let ones = data.labels().iter().filter(|&&y| y == 1).count();
    assert_eq!(upper_bound(&p, &data).unwrap(), ones.max(data.len() - ones));
    p.nodes[1] = PartialNode::Pruned;
    assert!(upper_bound(&p, &data).is_err());
}
