//! `rehearse`: command-line front end for the rehearsekit harness.
//!
//! Exit codes: 0 success, 1 runtime failure (or a failed check), 2 usage or
//! configuration error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use rehearsekit::corpus::fixtures::{load_suite, write_suite};
use rehearsekit::corpus::{generate_synthetic_suite, load_dataset, FixtureConfig, FixtureTask, Split, TaskSpec};
use rehearsekit::evaluation::{
    compositionality_sweep, compute_upper_bounds, file_digest, order_invariance_report, read_results,
    run_continual_sequence, series_csv, series_svg, EvalConfig, RelativeGainSeries, RunManifest, TaskCatalog,
    UpperBoundTable, FORGETTING_THRESHOLD, MANIFEST_FILE, RESULTS_FILE,
};
use rehearsekit::learner::{snapshot_id, FeatureConfig, HashedNgramFactory, Learner, LearnerRegistry, HASHED_NGRAM};
use rehearsekit::metrics::{fit_author_classifier, load_predictions, score_predictions, MetricRegistry, CLF};
use rehearsekit::rehearsal::Direction;

use config::RunConfig;

const RUN_CONFIG_FILE: &str = "run.toml";

#[derive(Parser)]
#[command(name = "rehearse", version, about = "Rehearsal-based continual learning harness")]
struct Cli {
    /// Root for default output locations.
    #[arg(long, global = true, env = "REHEARSE_OUT", default_value = "rehearse-out")]
    out_root: PathBuf,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task suite.
    Fixtures(FixturesArgs),
    /// Compute single-task upper bounds for every task in a run config.
    Ub(UbArgs),
    /// Run a continual-learning sequence.
    Run(RunArgs),
    /// Repeat a finished run from its directory and compare results digests.
    Rerun(RerunArgs),
    /// Score a predictions file against a dataset.
    Score(ScoreArgs),
    /// Compositionality sweep of a learner snapshot on a keyword task.
    Compose(ComposeArgs),
    /// Write CSV and SVG renderings of a results file.
    Plot(PlotArgs),
    /// Compare final relative gains of a forward and a reversed run.
    OrderCheck(OrderCheckArgs),
}

#[derive(Args)]
struct FixturesArgs {
    /// Fixture suite TOML; defaults to copy, reverse, keyword insertion and a zero-shot repeat task.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory [default: <out-root>/fixtures].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace suite files already in the output directory.
    #[arg(long)]
    force: bool,
}

/// Flags that override fields of the run config.
#[derive(Args)]
struct RunOverrides {
    /// Run config TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Rehearsal fraction in [0, 1].
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, value_parser = parse_direction)]
    direction: Option<Direction>,
    #[arg(long)]
    ub_file: Option<PathBuf>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    learner_seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct UbArgs {
    #[command(flatten)]
    run: RunOverrides,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    run: RunOverrides,
    /// Run directory [default: <out-root>/runs/<direction>-r<r>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute and save upper bounds when the table is missing.
    #[arg(long)]
    with_ub: bool,
    /// Replace the artifacts of an earlier run in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RerunArgs {
    /// Directory of the finished run.
    run_dir: PathBuf,
    /// Where to write the repeat [default: <run-dir>/rerun].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// JSONL with one {"id", "prediction"} per line.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Task spec JSON (`<id>.task.json` of a suite).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Comma-separated metric ids [default: the task's metrics].
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
}

#[derive(Args)]
struct ComposeArgs {
    /// Suite directory [default: <out-root>/fixtures].
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    task: String,
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value = HASHED_NGRAM)]
    learner: String,
    /// Constraint counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    eval_cap: usize,
    #[arg(long, default_value_t = 16)]
    max_len: usize,
    #[arg(long, default_value_t = 9)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    /// Output directory [default: next to the results file].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OrderCheckArgs {
    #[arg(long)]
    forward: PathBuf,
    #[arg(long)]
    reversed: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "forward" => Ok(Direction::Forward),
        "reversed" => Ok(Direction::Reversed),
        _ => Err(format!("expected `forward` or `reversed`, got `{s}`")),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("expected `train` or `test`, got `{s}`")),
    }
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type CliResult<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Fixtures(a) => cmd_fixtures(&cli.out_root, a),
        Command::Ub(a) => cmd_ub(&cli.out_root, a),
        Command::Run(a) => cmd_run(&cli.out_root, a),
        Command::Rerun(a) => cmd_rerun(a),
        Command::Score(a) => cmd_score(a),
        Command::Compose(a) => cmd_compose(&cli.out_root, a),
        Command::Plot(a) => cmd_plot(a),
        Command::OrderCheck(a) => cmd_order_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

fn default_fixture_config() -> FixtureConfig {
    let mut repeat = FixtureTask::new("repeat", "copy", 2000, 200);
    repeat.zero_shot = true;
    repeat.prefix = Some("repeat".into());
    FixtureConfig::new(vec![
        FixtureTask::new("copy", "copy", 2000, 200),
        FixtureTask::new("reverse", "reverse", 2000, 200),
        FixtureTask::new("insert", "keyword-insertion", 2000, 200),
        repeat,
    ])
}

fn is_suite_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".task.json") || name.ends_with(".train.jsonl") || name.ends_with(".test.jsonl")
}

fn is_nonempty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn load_catalog(dir: &Path) -> CliResult<TaskCatalog> {
    if !dir.is_dir() {
        return Err(Failure::Usage(anyhow!(
            "no fixture suite at {}; run `rehearse fixtures` first",
            dir.display()
        )));
    }
    let suite = load_suite(dir).with_context(|| format!("loading suite from {}", dir.display())).usage()?;
    TaskCatalog::new(suite).usage()
}

fn resolve_config(root: &Path, o: &RunOverrides) -> CliResult<RunConfig> {
    let mut c = RunConfig::load(&o.config).usage()?;
    if let Some(v) = &o.fixtures {
        c.fixtures = Some(v.clone());
    }
    if let Some(v) = o.r {
        c.r = v;
    }
    if let Some(v) = o.direction {
        c.direction = v;
    }
    if let Some(v) = &o.ub_file {
        c.ub_file = Some(v.clone());
    }
    if let Some(v) = o.data_seed {
        c.seeds.data = v;
    }
    if let Some(v) = o.learner_seed {
        c.seeds.learner = v;
    }
    if let Some(v) = o.learning_rate {
        c.hyper.learning_rate = v;
    }
    if let Some(v) = o.epochs {
        c.hyper.epochs = v;
    }
    c.fixtures.get_or_insert_with(|| root.join("fixtures"));
    c.ub_file.get_or_insert_with(|| root.join("ub.json"));
    c.validate().usage()?;
    Ok(c)
}

fn learner_registry(hash_bits: u32) -> LearnerRegistry {
    let mut r = LearnerRegistry::default();
    r.register(Box::new(HashedNgramFactory {
        features: FeatureConfig {
            hash_bits,
            ..FeatureConfig::default()
        },
    }));
    r
}

fn base_learner(c: &RunConfig, catalog: &TaskCatalog) -> CliResult<Box<dyn Learner>> {
    let registry = learner_registry(c.hash_bits);
    let factory = registry.get(&c.learner).usage()?;
    factory.init(c.seeds.learner, &catalog.all_datasets()).runtime()
}

/// Default metrics plus the style classifier, fitted on the training targets
/// of any listed task that is scored with it.
fn metric_registry(catalog: &TaskCatalog, tasks: &[String]) -> CliResult<MetricRegistry> {
    let mut reg = MetricRegistry::default();
    let mut corpus: Vec<(String, String)> = Vec::new();
    for id in tasks {
        let t = catalog.get(id).usage()?;
        if t.spec.metric_ids.iter().any(|m| m == CLF) {
            corpus.extend(
                t.train
                    .iter()
                    .filter_map(|e| e.meta.author.clone().map(|a| (e.target_text.clone(), a))),
            );
        }
    }
    if !corpus.is_empty() {
        let clf = fit_author_classifier(&corpus, 1.0).runtime()?;
        reg.with_style_classifier(Arc::new(clf));
    }
    Ok(reg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
    }
    let body = serde_json::to_string_pretty(value).runtime()? + "\n";
    fs::write(path, body).with_context(|| format!("writing {}", path.display())).runtime()
}

fn print_json(value: &impl serde::Serialize) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value).runtime()?);
    Ok(())
}

// ---------------------------------------------------------------------------
// commands

fn cmd_fixtures(root: &Path, a: &FixturesArgs) -> CliResult {
    let config = match &a.config {
        Some(p) => {
            let body = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
            toml::from_str::<FixtureConfig>(&body)
                .with_context(|| format!("parsing {}", p.display()))
                .usage()?
        }
        None => default_fixture_config(),
    };
    let out = a.out.clone().unwrap_or_else(|| root.join("fixtures"));
    if is_nonempty_dir(&out) {
        if !a.force {
            return Err(Failure::Usage(anyhow!(
                "{} is not empty; pass --force to replace the suite",
                out.display()
            )));
        }
        for entry in fs::read_dir(&out).runtime()? {
            let p = entry.runtime()?.path();
            if is_suite_file(&p) {
                fs::remove_file(&p).runtime()?;
            }
        }
    }
    let suite = generate_synthetic_suite(&config, a.seed).usage()?;
    write_suite(&out, &suite).runtime()?;
    for t in &suite {
        println!(
            "{}: {} train / {} test{}",
            t.spec.task_id,
            t.train.len(),
            t.test.len(),
            if t.spec.zero_shot_only { " (zero-shot)" } else { "" }
        );
    }
    println!("wrote {} tasks to {}", suite.len(), out.display());
    Ok(())
}

fn compute_and_save_ub(c: &RunConfig, catalog: &TaskCatalog, base: &dyn Learner) -> CliResult<UpperBoundTable> {
    let tasks = c.all_tasks();
    let reg = metric_registry(catalog, &tasks)?;
    let ubs = compute_upper_bounds(&tasks, catalog, base, &c.hyper.train(), &reg, &c.eval_config(), c.seeds.ub)
        .runtime()?;
    write_json(c.ub_file.as_deref().expect("resolved"), &ubs)?;
    Ok(ubs)
}

fn cmd_ub(root: &Path, a: &UbArgs) -> CliResult {
    let c = resolve_config(root, &a.run)?;
    let catalog = load_catalog(c.fixtures.as_deref().expect("resolved"))?;
    c.check_tasks(&catalog).usage()?;
    let base = base_learner(&c, &catalog)?;
    let ubs = compute_and_save_ub(&c, &catalog, base.as_ref())?;
    for (task, metrics) in &ubs.entries {
        let parts: Vec<String> = metrics.iter().map(|(m, v)| format!("{m}={v:.4}")).collect();
        println!("{task}: {}", parts.join(" "));
    }
    println!("wrote {}", c.ub_file.as_deref().expect("resolved").display());
    Ok(())
}

fn load_ub(path: &Path) -> CliResult<UpperBoundTable> {
    let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).usage()?;
    serde_json::from_str(&body)
        .with_context(|| format!("parsing {}", path.display()))
        .usage()
}

/// Empties the run artifacts of `dir` when `force` is set, refuses otherwise.
fn prepare_run_dir(dir: &Path, force: bool) -> CliResult {
    if !is_nonempty_dir(dir) {
        return Ok(());
    }
    if !force {
        return Err(Failure::Usage(anyhow!(
            "{} already holds a run; pass --force to replace it",
            dir.display()
        )));
    }
    for name in [MANIFEST_FILE, RESULTS_FILE, RUN_CONFIG_FILE, "base.snapshot"] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).runtime()?;
        }
    }
    for sub in ["buffers", "snapshots"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).runtime()?;
        }
    }
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn run_id_of(dir: &Path) -> String {
    dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string()
}

fn summarize(series: &RelativeGainSeries, tasks: &[String]) {
    for t in tasks {
        if let Some(rg) = series.final_rg(t) {
            let kept = rehearsekit::evaluation::forgetting_flag(rg, FORGETTING_THRESHOLD);
            println!("{t}: final RG {rg:.4}{}", if kept { "" } else { " (forgotten)" });
        }
    }
}

fn cmd_run(root: &Path, a: &RunArgs) -> CliResult {
    let mut c = resolve_config(root, &a.run)?;
    let catalog = load_catalog(c.fixtures.as_deref().expect("resolved"))?;
    c.check_tasks(&catalog).usage()?;
    let sequence = c.sequence_config().usage()?;
    let base = base_learner(&c, &catalog)?;

    let ub_path = c.ub_file.clone().expect("resolved");
    let ubs = if ub_path.exists() {
        load_ub(&ub_path)?
    } else if a.with_ub {
        compute_and_save_ub(&c, &catalog, base.as_ref())?
    } else {
        return Err(Failure::Usage(anyhow!(
            "no upper-bound table at {}; run `rehearse ub` first or pass --with-ub",
            ub_path.display()
        )));
    };
    let base_id = snapshot_id(&base.snapshot());
    if ubs.base_snapshot != base_id {
        return Err(Failure::Usage(anyhow!(
            "upper bounds in {} were computed from base {} but this config starts from {base_id}",
            ub_path.display(),
            ubs.base_snapshot
        )));
    }

    let dir = a
        .out
        .clone()
        .or_else(|| c.out.clone())
        .unwrap_or_else(|| root.join("runs").join(format!("{}-r{}", direction_name(c.direction), c.r)));
    prepare_run_dir(&dir, a.force)?;
    fs::create_dir_all(&dir).runtime()?;

    // the saved config must reproduce this run from any working directory
    c.fixtures = c.fixtures.as_deref().map(absolute);
    c.ub_file = Some(absolute(&ub_path));
    c.out = Some(absolute(&dir));
    fs::write(dir.join(RUN_CONFIG_FILE), c.to_toml()).runtime()?;

    let reg = metric_registry(&catalog, &c.all_tasks())?;
    let outcome =
        run_continual_sequence(&run_id_of(&dir), &sequence, &catalog, base.as_ref(), &ubs, &reg, Some(&dir)).runtime()?;
    summarize(&outcome.series, &c.all_tasks());
    println!("results: {}", dir.join(RESULTS_FILE).display());
    Ok(())
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Reversed => "reversed",
    }
}

fn cmd_rerun(a: &RerunArgs) -> CliResult {
    let c = RunConfig::load(&a.run_dir.join(RUN_CONFIG_FILE)).usage()?;
    c.validate().usage()?;
    let manifest = RunManifest::load(&a.run_dir.join(MANIFEST_FILE)).usage()?;
    let expected = manifest
        .results_digest
        .clone()
        .ok_or_else(|| Failure::Usage(anyhow!("run in {} did not complete", a.run_dir.display())))?;
    let catalog = load_catalog(c.fixtures.as_deref().ok_or_else(|| Failure::Usage(anyhow!("run.toml has no fixtures")))?)?;
    let base = base_learner(&c, &catalog)?;
    if snapshot_id(&base.snapshot()) != manifest.base_snapshot_id {
        return Err(Failure::Runtime(anyhow!("base learner no longer matches the manifest")));
    }
    let dir = a.out.clone().unwrap_or_else(|| a.run_dir.join("rerun"));
    prepare_run_dir(&dir, a.force)?;
    let reg = metric_registry(&catalog, &c.all_tasks())?;
    run_continual_sequence(
        &manifest.run_id,
        &manifest.config,
        &catalog,
        base.as_ref(),
        &manifest.upper_bounds,
        &reg,
        Some(&dir),
    )
    .runtime()?;
    let got = file_digest(&dir.join(RESULTS_FILE)).runtime()?;
    if got == expected {
        println!("identical results digest {got}");
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("results digest differs: {got} vs {expected}")))
    }
}

fn cmd_score(a: &ScoreArgs) -> CliResult {
    let body = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display())).usage()?;
    let spec: TaskSpec = serde_json::from_str(&body).with_context(|| format!("parsing {}", a.spec.display())).usage()?;
    spec.validate().usage()?;
    let dataset = load_dataset(&a.dataset, &spec, a.split).usage()?;
    let predictions = load_predictions(&a.predictions).usage()?;
    let ids = if a.metrics.is_empty() { spec.metric_ids.clone() } else { a.metrics.clone() };
    let report = score_predictions(&predictions, &dataset, &ids, &MetricRegistry::default()).usage()?;
    print_json(&report)
}

fn cmd_compose(root: &Path, a: &ComposeArgs) -> CliResult {
    let dir = a.fixtures.clone().unwrap_or_else(|| root.join("fixtures"));
    let catalog = load_catalog(&dir)?;
    let task = catalog.get(&a.task).usage()?;
    let bytes = fs::read(&a.snapshot).with_context(|| format!("reading {}", a.snapshot.display())).usage()?;
    let learner = LearnerRegistry::default().get(&a.learner).usage()?.restore(&bytes).usage()?;
    let eval = EvalConfig {
        eval_cap: a.eval_cap,
        seed: 0,
        max_len: a.max_len,
    };
    let mut rows = Vec::new();
    for &n in &a.n {
        rows.push(compositionality_sweep(learner.as_ref(), task, n, &eval, a.seed).usage()?);
    }
    print_json(&rows)
}

fn cmd_plot(a: &PlotArgs) -> CliResult {
    let points = read_results(&a.results).usage()?;
    let csv = series_csv(&points).usage()?;
    let svg = series_svg(&points).usage()?;
    let dir = a
        .out
        .clone()
        .or_else(|| a.results.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir).runtime()?;
    }
    let (csv_path, svg_path) = (dir.join("rg.csv"), dir.join("rg.svg"));
    fs::write(&csv_path, csv).runtime()?;
    fs::write(&svg_path, svg).runtime()?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}

fn cmd_order_check(a: &OrderCheckArgs) -> CliResult {
    if !a.tolerance.is_finite() || a.tolerance < 0.0 {
        return Err(Failure::Usage(anyhow!("tolerance must be >= 0")));
    }
    let load = |p: &Path| -> CliResult<RelativeGainSeries> {
        RelativeGainSeries::from_points(read_results(p).usage()?).usage()
    };
    let report = order_invariance_report(&load(&a.forward)?, &load(&a.reversed)?, a.tolerance).usage()?;
    print_json(&report)?;
    if report.pass {
        Ok(())
    } else {
        let worst: BTreeMap<_, _> = report.gaps.iter().filter(|(_, g)| **g > a.tolerance).collect();
        Err(Failure::Runtime(anyhow!("order gaps above {}: {worst:?}", a.tolerance)))
    }
}
