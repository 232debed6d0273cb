use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairtree::baselines::{self, SplitCriterion};
use fairtree::dataset::{self, BinarizationConfig};
use fairtree::fairness::{self, FairnessKind, FairnessSpec, Mode};
use fairtree::harness::{self, ExperimentConfig, Method, ModeName};
use fairtree::mip::{self, ExportOptions};
use fairtree::solver::{self, SolveOptions};
use fairtree::{Dataset, DecisionTree, TreeTopology};

/// Optimal and greedy fair classification trees.
#[derive(Parser, Debug)]
#[command(name = "fairtree", version, about)]
struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one tree and print its metrics.
    Solve(SolveArgs),
    /// Run a delta/depth sweep and write report tables.
    Sweep(ExperimentArgs),
    /// Pick the depth with the best validation accuracy per seed and delta.
    TuneDepth(ExperimentArgs),
    /// Write the mixed-integer model as LP text plus a name map.
    ExportMip(ExportArgs),
    /// Evaluate a saved tree or an external solver's solution on data.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CliMode {
    Absolute,
    OneSided,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Delimited data file.
    #[arg(long)]
    data: PathBuf,
    /// Binarization TOML describing the columns of the data file.
    #[arg(long)]
    binarization: PathBuf,
    /// Use only the training part of a seeded split with this train fraction.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Seed for the split and the subsample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw this many rows before splitting.
    #[arg(long)]
    subsample: Option<usize>,
}

#[derive(Args, Debug)]
struct FairnessArgs {
    /// none, statistical_parity, conditional_statistical_parity,
    /// predictive_equality, equal_opportunity or equalized_odds.
    #[arg(long, default_value = "none")]
    kind: FairnessKind,
    #[arg(long, value_enum, default_value = "absolute")]
    mode: CliMode,
    /// Bound on the disparity.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Dominant group (one-sided mode).
    #[arg(long)]
    dominant: Option<String>,
    /// Marginalized group (one-sided mode); omit to merge every other group.
    #[arg(long)]
    marginalized: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolveMethod {
    Exact,
    Greedy,
    IgcRelab,
    IgcPlusIgsRelab,
    IgcMinusIgsRelab,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, value_enum, default_value = "exact")]
    method: SolveMethod,
    /// Depth solved exactly before greedy extension.
    #[arg(long, default_value_t = 2)]
    greedy_start_depth: usize,
    /// Seconds.
    #[arg(long, default_value_t = solver::DEFAULT_TIME_LIMIT)]
    time_limit: f64,
    /// Split the first branching decision across threads.
    #[arg(long)]
    parallel: bool,
    /// Threads for --parallel (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the tree as JSON.
    #[arg(long)]
    tree_out: Option<PathBuf>,
    /// Write the tree as Graphviz DOT.
    #[arg(long)]
    dot_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment TOML; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    binarization: Option<PathBuf>,
    /// Comma-separated: exact, greedy, igc_relab, igc_plus_igs_relab, igc_minus_igs_relab.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    kind: Option<FairnessKind>,
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    #[arg(long)]
    dominant: Option<String>,
    #[arg(long)]
    marginalized: Option<String>,
    /// Keep all protected groups in one-sided mode instead of merging the non-dominant ones.
    #[arg(long)]
    no_collapse: bool,
    /// Comma-separated bounds (default 0.01..=0.55 by 0.01, plus 1).
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Share of training rows used for fitting in depth tuning.
    #[arg(long)]
    fit_fraction: Option<f64>,
    #[arg(long)]
    subsample: Option<usize>,
    /// Seconds per solver run.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    greedy_start_depth: Option<usize>,
    #[arg(long)]
    parallel_solver: bool,
    /// Runs executed concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// LP file to write; the name map goes to <out>.names.csv.
    #[arg(long)]
    out: PathBuf,
    /// Write source rows as `<= 1` instead of `= 1`.
    #[arg(long)]
    literal_source: bool,
    /// Fix the tree variables to this JSON tree through bounds.
    #[arg(long)]
    fix_tree: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    /// JSON tree written by `solve`.
    #[arg(long, conflicts_with = "solution", required_unless_present = "solution")]
    tree: Option<PathBuf>,
    /// Solution file (`name value` lines) for an exported model.
    #[arg(long, requires = "depth")]
    solution: Option<PathBuf>,
    /// Depth of the exported model, with --solution.
    #[arg(long)]
    depth: Option<usize>,
}

fn load(args: &DataArgs, fairness: &FairnessArgs) -> Result<Dataset> {
    let bin = BinarizationConfig::from_file(&args.binarization)?;
    let mut data = dataset::load_csv(&args.data, &bin)?;
    for w in data.warnings() {
        log::warn!("{w}");
    }
    if let Some(n) = args.subsample {
        data = data.subsample(n.min(data.len()), args.seed)?;
    }
    if fairness.mode == CliMode::OneSided && fairness.marginalized.is_none() {
        let dominant = fairness.dominant.as_deref().context("--mode one-sided needs --dominant")?;
        data = data.collapse_protected(dominant)?;
    }
    if let Some(f) = args.train_fraction {
        data = data.split(f, args.seed)?.0;
    }
    Ok(data)
}

fn spec(args: &FairnessArgs) -> Result<FairnessSpec> {
    if args.kind == FairnessKind::None {
        return Ok(FairnessSpec::none());
    }
    let mode = match args.mode {
        CliMode::Absolute => Mode::Absolute,
        CliMode::OneSided => {
            let dominant = args.dominant.clone().context("--mode one-sided needs --dominant")?;
            let marginalized = args.marginalized.clone().unwrap_or_else(|| format!("not {dominant}"));
            Mode::OneSided { dominant, marginalized }
        }
    };
    Ok(FairnessSpec::new(args.kind, args.delta, mode)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn describe(tree: &DecisionTree, data: &Dataset, spec: &FairnessSpec) -> Result<serde_json::Value> {
    let pred = tree.predict_dataset(data)?;
    let report = fairness::check(spec, data, &pred)?;
    Ok(serde_json::json!({
        "rows": data.len(),
        "correct": tree.correct_count(data)?,
        "accuracy": tree.accuracy(data)?,
        "disparity": report.value,
        "satisfied": report.satisfied,
        "tree": serde_json::from_str::<serde_json::Value>(&tree.to_json(Some(data.feature_names()))?)?,
    }))
}

fn solve(args: SolveArgs) -> Result<()> {
    let data = load(&args.data, &args.fairness)?;
    let spec = spec(&args.fairness)?;
    let mut opts = SolveOptions::new(args.depth).with_time_limit(args.time_limit).with_parallel(args.parallel);
    opts.threads = args.threads;
    let (tree, mut out) = match args.method {
        SolveMethod::Exact | SolveMethod::Greedy => {
            let r = if args.method == SolveMethod::Exact {
                solver::solve(&data, &spec, &opts)?
            } else {
                solver::greedy_deepen(&data, &spec, args.greedy_start_depth.min(args.depth), args.depth, &opts)?
            };
            let extra = serde_json::json!({
                "status": r.status.as_str(),
                "objective": r.objective,
                "bound": r.bound,
                "gap": r.gap(),
                "seconds": r.stats.seconds,
                "nodes": r.stats.nodes,
            });
            (r.tree, extra)
        }
        m => {
            let criterion = match m {
                SolveMethod::IgcRelab => SplitCriterion::Igc,
                SolveMethod::IgcPlusIgsRelab => SplitCriterion::IgcPlusIgs,
                _ => SplitCriterion::IgcMinusIgs,
            };
            let tree = baselines::cart_build(&data, args.depth, criterion)?;
            let tree = if spec.kind == FairnessKind::None { tree } else { baselines::relabel(&tree, &data, &spec)? };
            (tree, serde_json::json!({ "status": harness::HEURISTIC }))
        }
    };
    let metrics = describe(&tree, &data, &spec)?;
    out.as_object_mut().expect("object").extend(metrics.as_object().expect("object").clone());
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(p) = &args.tree_out {
        write(p, &tree.to_json(Some(data.feature_names()))?)?;
    }
    if let Some(p) = &args.dot_out {
        write(p, &tree.to_dot(data.feature_names())?)?;
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::new(
            args.dataset.clone().context("--dataset is required without --config")?,
            args.binarization.clone().context("--binarization is required without --config")?,
            args.kind.context("--kind is required without --config")?,
            args.output.clone().context("--output is required without --config")?,
        ),
    };
    if let Some(v) = args.dataset {
        c.dataset = v;
    }
    if let Some(v) = args.binarization {
        c.binarization = v;
    }
    if let Some(v) = args.methods {
        c.methods = v;
    }
    if let Some(v) = args.kind {
        c.kind = v;
    }
    if let Some(v) = args.mode {
        c.mode = match v {
            CliMode::Absolute => ModeName::Absolute,
            CliMode::OneSided => ModeName::OneSided,
        };
    }
    if args.dominant.is_some() {
        c.dominant = args.dominant;
    }
    if args.marginalized.is_some() {
        c.marginalized = args.marginalized;
    }
    if args.no_collapse {
        c.collapse_groups = false;
    }
    if let Some(v) = args.deltas {
        c.deltas = v;
    }
    if let Some(v) = args.depths {
        c.depths = v;
    }
    if let Some(v) = args.seeds {
        c.seeds = v;
    }
    if let Some(v) = args.train_fraction {
        c.train_fraction = v;
    }
    if let Some(v) = args.fit_fraction {
        c.fit_fraction = v;
    }
    if args.subsample.is_some() {
        c.subsample = args.subsample;
    }
    if let Some(v) = args.time_limit {
        c.time_limit = v;
    }
    if let Some(v) = args.greedy_start_depth {
        c.greedy_start_depth = v;
    }
    if args.parallel_solver {
        c.parallel_solver = true;
    }
    if let Some(v) = args.jobs {
        c.jobs = v;
    }
    if let Some(v) = args.output {
        c.output = v;
    }
    c.validate()?;
    Ok(c)
}

fn sweep(args: ExperimentArgs, tune: bool) -> Result<()> {
    let config = experiment(args)?;
    let report = if tune { harness::tune_depth(&config)? } else { harness::run_sweep(&config)? };
    for path in harness::emit_report(&report, &config.output)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let data = load(&args.data, &args.fairness)?;
    let spec = spec(&args.fairness)?;
    let fixed = match &args.fix_tree {
        Some(p) => Some(DecisionTree::from_json(
            &std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        )?),
        None => None,
    };
    let options = ExportOptions { literal_source: args.literal_source, fix_tree: fixed.as_ref() };
    let model = mip::export(&data, args.depth, &spec, &args.out, &options)?;
    let c = model.counts();
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "model": args.out,
            "names": mip::names_path(&args.out),
            "variables": model.variables.len(),
            "rows": model.rows.len(),
            "counts": c,
        }))?
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let data = load(&args.data, &args.fairness)?;
    let spec = spec(&args.fairness)?;
    let (tree, claimed) = match (&args.tree, &args.solution) {
        (Some(p), _) => (DecisionTree::from_json(&std::fs::read_to_string(p)?)?, None),
        (None, Some(p)) => {
            let depth = args.depth.context("--solution needs --depth")?;
            let s = mip::import_solution(&std::fs::read_to_string(p)?, TreeTopology::new(depth)?)?;
            (s.tree, s.objective)
        }
        (None, None) => bail!("pass --tree or --solution"),
    };
    let mut out = describe(&tree, &data, &spec)?;
    if let Some(obj) = claimed {
        out["reported_objective"] = serde_json::json!(obj);
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    let pred = tree.predict_dataset(&data)?;
    eprint!("{}", fairness::check(&spec, &data, &pred)?.to_table(&data));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a, false),
        Command::TuneDepth(a) => sweep(a, true),
        Command::ExportMip(a) => export(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
