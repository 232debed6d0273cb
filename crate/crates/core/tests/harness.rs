use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fairtree::fairness::{FairnessKind, FairnessSpec};
use fairtree::harness::{
    self, emit_report, select_depth, ExperimentConfig, Method, ModeName, Report, RunRow, HEURISTIC, ROW_COLUMNS,
};
use fairtree::solver::{self, SolveOptions};
use fairtree::{DecisionTree, Error, TreeTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BINARIZATION: &str = r#"
label_column = "y"
positive_label_value = "yes"
protected_column = "group"
categorical_columns = ["color"]
numeric_columns = [
    { name = "a", thresholds = [2, 5] },
    { name = "b", thresholds = [0] },
]
"#;

/// 120 rows where the label depends on `a`, `color` and the group.
fn write_inputs(dir: &Path) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut csv = String::from("a,b,color,group,y\n");
    for _ in 0..120 {
        let a: u32 = rng.gen_range(0..8);
        let b: i32 = rng.gen_range(-1..2);
        let color = ["red", "green", "blue"][rng.gen_range(0..3)];
        let group = ["A", "B", "C"][rng.gen_range(0..3)];
        let p = 0.2 + 0.08 * a as f64 + if group == "A" { 0.2 } else { 0.0 } + if color == "red" { 0.1 } else { 0.0 };
        let y = if rng.gen_bool(p.min(0.95)) { "yes" } else { "no" };
        csv.push_str(&format!("{a},{b},{color},{group},{y}\n"));
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
    fs::write(dir.join("bin.toml"), BINARIZATION).unwrap();
    let mut c = ExperimentConfig::new(
        dir.join("data.csv"),
        dir.join("bin.toml"),
        FairnessKind::StatisticalParity,
        dir.join("out"),
    );
    c.deltas = vec![0.05, 0.2];
    c.depths = vec![2];
    c.seeds = vec![0, 1, 2];
    c.time_limit = 60.0;
    c
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| header.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

fn one_sided(c: &mut ExperimentConfig, methods: Vec<Method>) {
    c.mode = ModeName::OneSided;
    c.dominant = Some("A".into());
    c.methods = methods;
}

#[test]
fn empty_report_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    let report = Report { config, rows: vec![], candidates: vec![], summary: vec![] };
    let files = emit_report(&report, &dir.path().join("empty")).unwrap();
    let rows = fs::read_to_string(&files[0]).unwrap();
    assert_eq!(rows, format!("{}\n", ROW_COLUMNS.join(",")));
    assert_eq!(fs::read_to_string(&files[1]).unwrap().lines().count(), 1);
}

#[test]
fn three_seeds_two_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    let report = harness::run_sweep(&config).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.summary.len(), 2);
    let files = emit_report(&report, &config.output).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["rows.csv", "summary.csv", "report.json", "timings.csv"]);

    let rows = read_csv(&config.output.join("rows.csv"));
    let summary = read_csv(&config.output.join("summary.csv"));
    assert_eq!((rows.len(), summary.len()), (6, 2));
    for s in &summary {
        let group: Vec<_> = rows.iter().filter(|r| r["delta"] == s["delta"] && r["depth"] == s["depth"]).collect();
        assert_eq!(group.len().to_string(), s["runs"]);
        for col in ["train_accuracy", "test_accuracy", "train_disparity", "test_disparity"] {
            let mean = group.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / group.len() as f64;
            assert_eq!(mean, s[&format!("mean_{col}")].parse::<f64>().unwrap(), "{col}");
        }
    }
    assert_eq!(read_csv(&config.output.join("timings.csv")).len(), 6);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path());
    one_sided(&mut config, Method::ALL.to_vec());
    config.depths = vec![1, 2];
    let run = |name: &str, c: &ExperimentConfig| {
        let out = dir.path().join(name);
        emit_report(&harness::run_sweep(c).unwrap(), &out).unwrap();
        out
    };
    let read = |dir: &Path, f: &str| fs::read_to_string(dir.join(f)).unwrap();
    let first = run("first", &config);
    let second = run("second", &config);
    for f in ["rows.csv", "summary.csv", "report.json"] {
        assert!(read(&first, f) == read(&second, f), "{f} differs between reruns");
    }
    config.jobs = 3;
    let threaded = run("threaded", &config);
    for f in ["rows.csv", "summary.csv"] {
        assert!(read(&first, f) == read(&threaded, f), "{f} depends on the worker count");
    }
}

#[test]
fn vacuous_grid_matches_unconstrained_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path());
    config.deltas = vec![1.0];
    config.depths = vec![1, 2];
    let data = harness::load_data(&config).unwrap();
    let report = harness::run_sweep_on(&config, &data).unwrap();
    assert_eq!(report.rows.len(), config.seeds.len() * config.depths.len());
    for r in &report.rows {
        let (train, _) = data.split(config.train_fraction, r.seed).unwrap();
        let free = solver::solve(&train, &FairnessSpec::none(), &SolveOptions::new(r.depth)).unwrap();
        assert_eq!(r.objective, free.objective);
        assert_eq!(r.status, "optimal");
        assert_eq!(r.gap, Some(0));
    }
}

#[test]
fn exact_rows_are_monotone_fair_and_dominant() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path());
    one_sided(&mut config, Method::ALL.to_vec());
    config.deltas = vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 1.0];
    config.depths = vec![2, 3];
    let report = harness::run_sweep(&config).unwrap();
    for r in &report.rows {
        if r.status != HEURISTIC {
            assert!(r.train_satisfied, "{r:?}");
        }
        if r.method.criterion().is_some() {
            assert!(r.train_satisfied);
            let exact = report
                .rows
                .iter()
                .find(|e| e.method == Method::Exact && e.seed == r.seed && e.depth == r.depth && e.delta == r.delta)
                .unwrap();
            if exact.status == "optimal" {
                assert!(exact.objective >= r.objective, "{exact:?} vs {r:?}");
            }
        }
    }
    for depth in [2, 3] {
        let curve: Vec<f64> = report
            .summary
            .iter()
            .filter(|s| s.method == Method::Exact && s.depth == Some(depth))
            .map(|s| s.mean_train_accuracy)
            .collect();
        assert_eq!(curve.len(), config.deltas.len());
        assert!(curve.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{curve:?}");
    }
}

#[test]
fn incompatible_configs_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path());
    config.methods = vec![Method::Exact, Method::IgcRelab];
    assert!(matches!(harness::run_sweep(&config), Err(Error::Config(_))));
    one_sided(&mut config, vec![Method::Exact]);
    config.dominant = Some("Z".into());
    assert!(matches!(harness::run_sweep(&config), Err(Error::Config(_))));
    assert!(!config.output.exists());
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let text = "dataset = \"data.csv\"\nbinarization = \"bin.toml\"\noutput = \"out\"\nkind = \"equalized_odds\"\nmode = \"absolute\"\ndeltas = [0.1]\ndepths = [1]\nseeds = [4]\n";
    fs::write(dir.path().join("exp.toml"), text).unwrap();
    let c = ExperimentConfig::from_file(dir.path().join("exp.toml")).unwrap();
    assert_eq!(c.dataset, dir.path().join("data.csv"));
    let report = harness::run_sweep(&c).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].seed, 4);
}

#[test]
fn tuning_selects_by_validation_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path());
    one_sided(&mut config, vec![Method::Greedy, Method::IgcRelab]);
    config.depths = vec![3, 2, 4];
    let report = harness::tune_depth(&config).unwrap();
    assert_eq!(report.rows.len(), 3 * 2 * 2);
    assert_eq!(report.candidates.len(), 3 * report.rows.len());
    assert_eq!(report.summary.len(), 2 * 2);
    for (row, group) in report.rows.iter().zip(report.candidates.chunks(3)) {
        assert_eq!(group.iter().map(|r| r.depth).collect::<Vec<_>>(), [2, 3, 4]);
        let best = group.iter().map(|r| r.validation_accuracy.unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(row.validation_accuracy, Some(best));
        let first = group.iter().find(|r| r.validation_accuracy == Some(best)).unwrap();
        assert_eq!(row.depth, first.depth);
        assert_eq!(row.n_train + row.n_test, 120 - (120.0f64 * 0.75).round() as usize / 3);
    }
    let files = emit_report(&report, &config.output).unwrap();
    assert!(files.iter().any(|p| p.ends_with("candidates.csv")));

    config.depths = vec![3];
    let single = harness::tune_depth(&config).unwrap();
    assert!(single.rows.iter().all(|r| r.depth == 3));
}

fn fake(depth: usize, validation: f64) -> RunRow {
    RunRow {
        method: Method::Greedy,
        seed: 0,
        depth,
        delta: 0.1,
        status: "optimal".into(),
        objective: 0,
        bound: Some(0),
        gap: Some(0),
        n_train: 1,
        n_test: 1,
        train_accuracy: 0.0,
        test_accuracy: 0.0,
        train_disparity: 0.0,
        test_disparity: None,
        train_satisfied: true,
        validation_accuracy: Some(validation),
        seconds: 0.0,
        tree: DecisionTree::constant(TreeTopology::new(depth).unwrap(), 0),
    }
}

#[test]
fn validation_ties_go_to_the_smallest_depth() {
    let rows = [fake(3, 0.7), fake(4, 0.8), fake(5, 0.8), fake(6, 0.6)];
    assert_eq!(select_depth(&rows).depth, 4);
    assert_eq!(select_depth(&rows[..1]).depth, 3);
}

#[test]
fn shipped_experiment_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiments");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        c.validate().unwrap();
        assert!(c.binarization.exists(), "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 4);
}
