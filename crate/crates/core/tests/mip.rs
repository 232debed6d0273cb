mod common;

use std::time::{Duration, Instant};

use common::{predictions_satisfy, random_instance, spec_for, DELTAS, KINDS};
use fairtree::fairness::{self, FairnessKind, FairnessSpec, Sense};
use fairtree::mip::{self, ExportOptions, MipModel, ModelCounts, RowSense, VarKind};
use fairtree::solver::{self, SolveOptions};
use fairtree::{Dataset, DecisionTree, NodeKind, TreeTopology};

fn small(seed: u64, max_points: usize) -> Dataset {
    let data = random_instance(seed);
    if data.len() <= max_points {
        return data;
    }
    let keep: Vec<usize> = (0..max_points).collect();
    data.select(&keep)
}

fn optimum(model: &MipModel) -> mip::BinarySolution {
    let r = mip::solve_binary(model, Some(Instant::now() + Duration::from_secs(120))).unwrap();
    assert!(!r.aborted);
    r.best.expect("the constant tree is feasible")
}

fn fairness_rows(spec: &FairnessSpec, data: &Dataset) -> usize {
    let c = fairness::compile(spec, data).unwrap();
    c.instances.iter().map(|i| if i.sense == Sense::Absolute { 2 } else { 1 }).sum()
}

#[test]
fn worked_example_has_114_variables() {
    let rows = vec![vec![0, 1, 0], vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 1]];
    let data = Dataset::new(rows, vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
    let m = mip::build(&data, 2, &FairnessSpec::none(), &ExportOptions::default()).unwrap();
    let c = m.counts();
    assert_eq!((c.b, c.p, c.w, c.z), (9, 7, 14, 84));
    assert_eq!(m.variables.len(), 114);
    assert_eq!(c, ModelCounts::expected(4, 3, 2, 0));
}

#[test]
fn fairness_row_counts() {
    let rows = vec![vec![0], vec![1], vec![0], vec![1]];
    let data = Dataset::new(rows, vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
    let none = mip::build(&data, 1, &FairnessSpec::none(), &ExportOptions::default()).unwrap();
    assert_eq!(none.counts().fairness_rows, 0);
    let sp = spec_for(FairnessKind::StatisticalParity, 0.1);
    let m = mip::build(&data, 1, &sp, &ExportOptions::default()).unwrap();
    assert_eq!(m.counts().fairness_rows, 2);
    let one = FairnessSpec::one_sided(FairnessKind::StatisticalParity, 0.1, "g0", "g1").unwrap();
    assert_eq!(mip::build(&data, 1, &one, &ExportOptions::default()).unwrap().counts().fairness_rows, 1);
}

#[test]
fn counts_follow_closed_forms() {
    for seed in 0..20 {
        let data = random_instance(seed);
        for depth in 1..=3 {
            for kind in KINDS {
                let spec = spec_for(kind, 0.1);
                let m = mip::build(&data, depth, &spec, &ExportOptions::default()).unwrap();
                let expected = ModelCounts::expected(data.len(), data.n_features(), depth, fairness_rows(&spec, &data));
                assert_eq!(m.counts(), expected, "seed {seed} depth {depth} {kind}");
                assert_eq!(m.counts().variables(), m.variables.len());
                assert!(m.variables.iter().all(|v| v.kind.is_some() && v.binary));
                for r in &m.rows {
                    assert!(r.terms.iter().all(|&(v, _)| v < m.variables.len()), "{}", r.name);
                }
            }
        }
    }
}

#[test]
fn lp_text_round_trips() {
    for seed in 0..5 {
        let data = small(seed, 20);
        for literal_source in [false, true] {
            let spec = spec_for(FairnessKind::EqualizedOdds, 0.07);
            let opts = ExportOptions { literal_source, fix_tree: None };
            let m = mip::build(&data, 2, &spec, &opts).unwrap();
            let text = mip::write_lp(&m, "round trip");
            assert_eq!(mip::read_lp(&text).unwrap(), m);
            let src = m.rows.iter().find(|r| r.name == "src_0").unwrap();
            assert_eq!(src.sense, if literal_source { RowSense::Le } else { RowSense::Eq });
        }
    }
}

#[test]
fn export_writes_model_and_name_map() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.lp");
    let data = small(3, 10);
    let spec = spec_for(FairnessKind::StatisticalParity, 0.2);
    let m = mip::export(&data, 2, &spec, &path, &ExportOptions::default()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("\\ "));
    assert_eq!(mip::read_lp(&text).unwrap(), m);
    let names = std::fs::read_to_string(mip::names_path(&path)).unwrap();
    let mut lines = names.lines();
    assert_eq!(lines.next(), Some("name,kind,node,feature,class,datapoint"));
    assert_eq!(lines.count(), m.variables.len());
    assert!(names.contains("\nb_1_0,branch,1,0,,\n"));
    assert!(names.contains("\nzt_0_1_1,sink_arc,1,,1,0\n"));

    let bad = dir.path().join("missing").join("model.lp");
    let err = mip::export(&data, 2, &spec, &bad, &ExportOptions::default()).unwrap_err();
    assert!(matches!(err, fairtree::Error::Io { .. }));
}

#[test]
fn exported_optimum_matches_native_solver() {
    let mut checked = 0;
    for seed in 0..10 {
        let data = small(seed, 24);
        for (k, kind) in KINDS.into_iter().enumerate() {
            let delta = DELTAS[(seed as usize + k) % DELTAS.len()];
            let spec = spec_for(kind, delta);
            let model = mip::build(&data, 2, &spec, &ExportOptions::default()).unwrap();
            let best = optimum(&mip::read_lp(&mip::write_lp(&model, "")).unwrap());
            let native = solver::solve(&data, &spec, &SolveOptions::new(2)).unwrap();
            assert_eq!(best.objective, native.objective as f64, "seed {seed} {kind} delta {delta}");

            let imported =
                mip::import_solution(&mip::write_solution(&model, &best.values), TreeTopology::new(2).unwrap())
                    .unwrap();
            assert_eq!(imported.objective, Some(best.objective));
            assert_eq!(imported.tree.correct_count(&data).unwrap() as f64, best.objective);
            assert!(predictions_satisfy(&imported.tree, &data, &spec));
            flow_agrees_with_routing(&model, &best.values, &imported.tree, &data);
            checked += 1;
        }
    }
    assert_eq!(checked, 50);
}

fn flow_agrees_with_routing(model: &MipModel, values: &[f64], tree: &DecisionTree, data: &Dataset) {
    let routed = tree.route_dataset(data).unwrap();
    let pred = tree.predict_dataset(data).unwrap();
    for (v, x) in model.variables.iter().zip(values) {
        if let Some(VarKind::Sink { point, node, class }) = v.kind {
            let expected = routed[point] == node && pred[point] == class;
            assert_eq!(*x == 1.0, expected, "{}", v.name);
        }
    }
}

#[test]
fn native_optimum_is_feasible_when_fixed() {
    for seed in 20..30 {
        let data = small(seed, 30);
        let spec = spec_for(KINDS[seed as usize % KINDS.len()], 0.1);
        let native = solver::solve(&data, &spec, &SolveOptions::new(2)).unwrap();
        let opts = ExportOptions { literal_source: false, fix_tree: Some(&native.tree) };
        let model = mip::build(&data, 2, &spec, &opts).unwrap();
        let text = mip::write_lp(&model, "");
        assert!(text.contains("\nBounds\n"));
        let best = optimum(&mip::read_lp(&text).unwrap());
        assert_eq!(best.objective, native.objective as f64);
        assert!(model.violated_row(&best.values, 1e-9).is_none());
    }
}

#[test]
fn fixing_an_unfair_tree_is_infeasible() {
    // the feature equals the group, so splitting on it separates groups perfectly
    let rows = vec![vec![0], vec![0], vec![0], vec![1], vec![1], vec![1]];
    let data = Dataset::new(rows, vec![0, 0, 0, 1, 1, 1], vec![0, 0, 0, 1, 1, 1]).unwrap();
    let tree = DecisionTree::empty(TreeTopology::new(1).unwrap())
        .with_branch(1, 0)
        .unwrap()
        .with_prediction(2, 0)
        .unwrap()
        .with_prediction(3, 1)
        .unwrap();
    let spec = spec_for(FairnessKind::StatisticalParity, 0.5);
    let opts = ExportOptions { literal_source: false, fix_tree: Some(&tree) };
    let model = mip::build(&data, 1, &spec, &opts).unwrap();
    assert!(mip::solve_binary(&model, None).unwrap().best.is_none());
    let loose = mip::build(&data, 1, &FairnessSpec::none(), &opts).unwrap();
    assert_eq!(optimum(&loose).objective, 6.0);
}

#[test]
fn literal_source_rows_only_relax() {
    for seed in 0..8 {
        let data = small(seed, 16);
        let spec = spec_for(FairnessKind::StatisticalParity, 0.0);
        let strict = mip::build(&data, 1, &spec, &ExportOptions::default()).unwrap();
        let literal = mip::build(&data, 1, &spec, &ExportOptions { literal_source: true, fix_tree: None }).unwrap();
        assert!(optimum(&literal).objective >= optimum(&strict).objective);
    }
}

#[test]
fn unconstrained_ten_point_round_trip() {
    let data = small(7, 10);
    assert_eq!(data.len(), 10);
    let model = mip::build(&data, 2, &FairnessSpec::none(), &ExportOptions::default()).unwrap();
    let best = optimum(&model);
    let imported =
        mip::import_solution(&mip::write_solution(&model, &best.values), TreeTopology::new(2).unwrap()).unwrap();
    assert_eq!(imported.tree.correct_count(&data).unwrap() as f64, best.objective);
    assert!(imported.tree.is_valid());
}

#[test]
fn import_rejects_bad_assignments() {
    let topo = TreeTopology::new(2).unwrap();
    let err = mip::import_solution("b_1_0 1\nb_1_2 1\n", topo).unwrap_err().to_string();
    assert!(err.contains("b_1_2"), "{err}");
    let err = mip::import_solution("b_1_0 0.3\n", topo).unwrap_err().to_string();
    assert!(err.contains("b_1_0"), "{err}");
    let err = mip::import_solution("b_4_0 1\n", topo).unwrap_err().to_string();
    assert!(err.contains("b_4_0"), "{err}");
    let err = mip::import_solution("p_1 1\nw_1_0 1\nw_1_1 1\n", topo).unwrap_err().to_string();
    assert!(err.contains("p_1"), "{err}");
    let err = mip::import_solution("p_2 1\nw_2_0 1\n", topo).unwrap_err().to_string();
    assert!(err.contains("p_1"), "{err}");
    let ok = mip::import_solution("b_1_1 1\np_2 1\nw_2_0 1\np_3 1\nw_3_1 1\n", topo).unwrap();
    assert_eq!(ok.tree.kind(1), NodeKind::Branch { feature: 1 });
    assert_eq!(ok.objective, None);
}
