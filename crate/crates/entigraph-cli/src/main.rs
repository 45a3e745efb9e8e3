//! Command-line front end for the augmentation simulator and analytics.
//!
//! Subcommands map one-to-one onto the library's main operations:
//! `simulate` runs the Monte Carlo process or the exact per-pair oracle,
//! `analyze` evaluates closed forms (extinction probability, accuracy
//! band, branching approximation), `fit` performs
//! mixture-of-exponentials curve fitting, and `corpus` drives relation
//! planning, synthetic generation, prompt rendering, and quality
//! metrics. Every option can also come from a JSON file passed as
//! `--config`; explicit flags win over the file, the file wins over
//! built-in defaults. Artifact-producing runs write a `manifest.json`
//! next to their outputs recording the fully resolved configuration, so
//! a run can be replayed exactly. Outputs are deterministic given the
//! resolved configuration and seed.

use std::fmt;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process;

use anyhow::{anyhow, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use entigraph::analytics::{branching_approx_curve, default_approx_depth, extinction_probability};
use entigraph::corpus::{
    duplicate_rate, duplicate_rate_indexed, extract_entities, ngram_overlap, read_jsonl,
    render_prompt, synthesize_corpus, write_jsonl, HttpBackend, HttpConfig, MockBackend,
    PlanOptions, PromptKind, RelationFailure, SynthesisBackend, DEFAULT_JACCARD_THRESHOLD,
    DEFAULT_SHINGLE_WINDOW, DEFAULT_TRIPLET_CAP,
};
use entigraph::fit::{classify_phases, fit_moe};
use entigraph::process::log_step_grid;
use entigraph::{
    estimate_acc_curve, exact_acc_curve, generate_er, Bounds, Curve, DefaultTokenizer, Document,
    EntityPlan, ModelParams,
};

const DEFAULT_V: usize = 100;
const DEFAULT_LAMBDA: f64 = 3.0;
const DEFAULT_EPS: f64 = 0.1;
const DEFAULT_T_MAX: u64 = 1_000_000;
const DEFAULT_POINTS: usize = 10;
const DEFAULT_REPLICATES: u32 = 50;
const DEFAULT_TREES: u32 = 2000;
const DEFAULT_FIT_TERMS: usize = 3;
const DEFAULT_MAX_ITER: u32 = 200;
const DEFAULT_FIT_TOL: f64 = 1e-12;
const DEFAULT_RHO_TOL: f64 = 1e-12;
const DEFAULT_BUDGET: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "entigraph",
    version,
    about = "Simulator, analytics, and corpus tooling for the knowledge-graph augmentation model",
    after_help = "Exit codes: 0 success, 1 usage error, 2 runtime or backend error."
)]
struct Cli {
    /// JSON file whose keys override the active subcommand's defaults;
    /// explicit flags still win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the augmentation process and write the accuracy curve.
    Simulate(SimulateArgs),
    /// Evaluate closed-form analytics for the model.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Fit a mixture of decaying exponentials to a curve CSV.
    Fit(FitArgs),
    /// Plan, generate, and measure synthetic relation corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Print the extinction probability of the Poisson(lambda) process.
    Rho(RhoArgs),
    /// Write the closed-form accuracy band as band.csv.
    Band(BandArgs),
    /// Write the branching-process approximation as approx.csv.
    Approx(ApproxArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Extract entities and enumerate relation plans per document.
    Plan(PlanArgs),
    /// Generate one synthetic document per planned relation.
    Synth(SynthArgs),
    /// Print the rendered prompt for one document.
    Render(RenderArgs),
    /// Quality metrics over document corpora.
    #[command(subcommand)]
    Metrics(MetricsCmd),
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Percentage of synthetic n-grams present in the source document.
    Overlap(OverlapArgs),
    /// Fraction of documents near-duplicating an earlier one.
    Dedup(DedupArgs),
}

/// Spacing of the step grid between 0 and `t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GridKind {
    Log,
    Linear,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            err.print().expect("cannot write diagnostics");
            process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let code = if err.is::<UsageError>() { 1 } else { 2 };
        process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, config),
        Command::Analyze(AnalyzeCmd::Rho(args)) => cmd_rho(args, config),
        Command::Analyze(AnalyzeCmd::Band(args)) => cmd_band(args, config),
        Command::Analyze(AnalyzeCmd::Approx(args)) => cmd_approx(args, config),
        Command::Fit(args) => cmd_fit(args, config),
        Command::Corpus(CorpusCmd::Plan(args)) => cmd_plan(args, config),
        Command::Corpus(CorpusCmd::Synth(args)) => cmd_synth(args, config),
        Command::Corpus(CorpusCmd::Render(args)) => cmd_render(args, config),
        Command::Corpus(CorpusCmd::Metrics(MetricsCmd::Overlap(args))) => {
            cmd_overlap(args, config)
        }
        Command::Corpus(CorpusCmd::Metrics(MetricsCmd::Dedup(args))) => cmd_dedup(args, config),
    }
}

/// Error class reported with exit code 1 instead of 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

/// Loads the `--config` JSON file as a partial override set, or the
/// all-empty default when no file was given.
fn load_overrides<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("bad config file {}: {e}", path.display())))
}

/// Accepts plain integers and scientific notation such as `1e6`.
fn parse_steps(text: &str) -> Result<u64, String> {
    if let Ok(value) = text.parse::<u64>() {
        return Ok(value);
    }
    let value: f64 = text.parse().map_err(|_| format!("not a step count: {text:?}"))?;
    if !value.is_finite() || value < 0.0 || value > u64::MAX as f64 {
        return Err(format!("step count out of range: {text}"));
    }
    Ok(value.round() as u64)
}

fn steps_from_f64(value: f64) -> Result<u64> {
    if !value.is_finite() || value < 0.0 || value > u64::MAX as f64 {
        return Err(usage(format!("step count out of range: {value}")));
    }
    Ok(value.round() as u64)
}

/// Evenly spaced grid from 0 to `t_max` with duplicates collapsed.
fn linear_step_grid(t_max: u64, points: usize) -> Vec<u64> {
    if t_max == 0 || points < 2 {
        return vec![0];
    }
    let n = (points - 1) as u128;
    let mut grid: Vec<u64> = (0..=n).map(|i| (i * t_max as u128 / n) as u64).collect();
    grid.dedup();
    grid
}

fn make_grid(kind: GridKind, t_max: u64, points: usize) -> Vec<u64> {
    match kind {
        GridKind::Log => log_step_grid(t_max, points),
        GridKind::Linear => linear_step_grid(t_max, points),
    }
}

fn ensure_out(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let docs = read_jsonl(BufReader::new(file), &DefaultTokenizer)
        .with_context(|| format!("cannot parse {}", path.display()))?;
    Ok(docs)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    version: &'static str,
    command: &'a str,
    config: &'a C,
    outputs: &'a [&'a str],
}

/// Records the resolved configuration and artifact list next to the
/// outputs. Content is a pure function of the configuration, so reruns
/// produce identical bytes.
fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    outputs: &[&str],
) -> Result<()> {
    let manifest =
        Manifest { version: env!("CARGO_PKG_VERSION"), command, config, outputs };
    let text = serde_json::to_string_pretty(&manifest)
        .expect("manifest serialization cannot fail")
        + "\n";
    write_text(&out.join("manifest.json"), &text)
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of entities, the graph vertex count (default 100).
    #[arg(long)]
    v: Option<usize>,
    /// Mean out-degree of the source graph (default 3).
    #[arg(long)]
    lambda: Option<f64>,
    /// Slack parameter of the accuracy band (default 0.1).
    #[arg(long)]
    eps: Option<f64>,
    /// Largest step on the grid; accepts forms like 1e6 (default 1e6).
    #[arg(long, value_parser = parse_steps)]
    t_max: Option<u64>,
    /// Number of grid points (default 10).
    #[arg(long)]
    points: Option<usize>,
    /// Grid spacing (default log).
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    /// Monte Carlo replicates (default 50).
    #[arg(long)]
    replicates: Option<u32>,
    /// RNG seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Use the exact per-pair oracle instead of Monte Carlo.
    #[arg(long)]
    exact: bool,
    /// Also write the generated source graph as graph.json.
    #[arg(long)]
    save_graph: bool,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    v: Option<usize>,
    lambda: Option<f64>,
    eps: Option<f64>,
    t_max: Option<f64>,
    points: Option<usize>,
    grid: Option<GridKind>,
    replicates: Option<u32>,
    seed: Option<u64>,
    exact: Option<bool>,
    save_graph: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateConfig {
    v: usize,
    lambda: f64,
    eps: f64,
    t_max: u64,
    points: usize,
    grid: GridKind,
    replicates: u32,
    seed: u64,
    exact: bool,
    save_graph: bool,
}

fn cmd_simulate(args: SimulateArgs, config: Option<&Path>) -> Result<()> {
    let file: SimulateFile = load_overrides(config)?;
    let file_t_max = file.t_max.map(steps_from_f64).transpose()?;
    let cfg = SimulateConfig {
        v: args.v.or(file.v).unwrap_or(DEFAULT_V),
        lambda: args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
        eps: args.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
        t_max: args.t_max.or(file_t_max).unwrap_or(DEFAULT_T_MAX),
        points: args.points.or(file.points).unwrap_or(DEFAULT_POINTS),
        grid: args.grid.or(file.grid).unwrap_or(GridKind::Log),
        replicates: args.replicates.or(file.replicates).unwrap_or(DEFAULT_REPLICATES),
        seed: args.seed.or(file.seed).unwrap_or(0),
        exact: args.exact || file.exact.unwrap_or(false),
        save_graph: args.save_graph || file.save_graph.unwrap_or(false),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let params = ModelParams::new(cfg.v, cfg.lambda, cfg.eps)?;
    let graph = generate_er(&params, cfg.seed);
    let grid = make_grid(cfg.grid, cfg.t_max, cfg.points);
    let curve: Curve = if cfg.exact {
        exact_acc_curve(&graph, &grid)?
    } else {
        estimate_acc_curve(&graph, &grid, cfg.replicates, cfg.seed)?
    };
    ensure_out(&out)?;
    write_text(&out.join("curve.csv"), &curve.to_csv())?;
    let mut outputs = vec!["curve.csv"];
    if cfg.save_graph {
        write_text(&out.join("graph.json"), &(graph.to_json() + "\n"))?;
        outputs.push("graph.json");
    }
    write_manifest(&out, "simulate", &cfg, &outputs)
}

#[derive(Args)]
struct RhoArgs {
    /// Mean offspring count of the branching process (required).
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed-point residual tolerance (default 1e-12).
    #[arg(long)]
    tol: Option<f64>,
    /// Optional output directory for rho.txt and the manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RhoFile {
    lambda: Option<f64>,
    tol: Option<f64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RhoConfig {
    lambda: f64,
    tol: f64,
}

fn cmd_rho(args: RhoArgs, config: Option<&Path>) -> Result<()> {
    let file: RhoFile = load_overrides(config)?;
    let cfg = RhoConfig {
        lambda: require(args.lambda.or(file.lambda), "lambda")?,
        tol: args.tol.or(file.tol).unwrap_or(DEFAULT_RHO_TOL),
    };
    let rho = extinction_probability(cfg.lambda, cfg.tol)?;
    println!("{rho:?}");
    if let Some(out) = args.out.or(file.out) {
        ensure_out(&out)?;
        write_text(&out.join("rho.txt"), &format!("{rho:?}\n"))?;
        write_manifest(&out, "analyze rho", &cfg, &["rho.txt"])?;
    }
    Ok(())
}

#[derive(Args)]
struct BandArgs {
    /// Number of entities (default 100).
    #[arg(long)]
    v: Option<usize>,
    /// Mean out-degree; the band needs lambda > 1 (default 3).
    #[arg(long)]
    lambda: Option<f64>,
    /// Slack parameter epsilon of the band (default 0.1).
    #[arg(long)]
    eps: Option<f64>,
    /// Largest step on the grid; accepts forms like 1e6 (default 1e6).
    #[arg(long, value_parser = parse_steps)]
    t_max: Option<u64>,
    /// Number of grid points (default 10).
    #[arg(long)]
    points: Option<usize>,
    /// Grid spacing (default log).
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BandFile {
    v: Option<usize>,
    lambda: Option<f64>,
    eps: Option<f64>,
    t_max: Option<f64>,
    points: Option<usize>,
    grid: Option<GridKind>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BandConfig {
    v: usize,
    lambda: f64,
    eps: f64,
    t_max: u64,
    points: usize,
    grid: GridKind,
}

fn cmd_band(args: BandArgs, config: Option<&Path>) -> Result<()> {
    let file: BandFile = load_overrides(config)?;
    let file_t_max = file.t_max.map(steps_from_f64).transpose()?;
    let cfg = BandConfig {
        v: args.v.or(file.v).unwrap_or(DEFAULT_V),
        lambda: args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
        eps: args.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
        t_max: args.t_max.or(file_t_max).unwrap_or(DEFAULT_T_MAX),
        points: args.points.or(file.points).unwrap_or(DEFAULT_POINTS),
        grid: args.grid.or(file.grid).unwrap_or(GridKind::Log),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let params = ModelParams::new(cfg.v, cfg.lambda, cfg.eps)?;
    let bounds = Bounds::new(&params)?;
    let grid = make_grid(cfg.grid, cfg.t_max, cfg.points);
    let mut csv = String::from("t,lower,upper\n");
    for &t in &grid {
        let (lower, upper) = bounds.band(t);
        writeln!(csv, "{t},{lower},{upper}").expect("string writes cannot fail");
    }
    ensure_out(&out)?;
    write_text(&out.join("band.csv"), &csv)?;
    write_manifest(&out, "analyze band", &cfg, &["band.csv"])
}

#[derive(Args)]
struct ApproxArgs {
    /// Number of entities (default 100).
    #[arg(long)]
    v: Option<usize>,
    /// Mean offspring count (default 3).
    #[arg(long)]
    lambda: Option<f64>,
    /// Slack parameter carried by the model (default 0.1).
    #[arg(long)]
    eps: Option<f64>,
    /// Tree depth (default: ceil(log_lambda V), clamped to 1..=30).
    #[arg(long)]
    depth: Option<usize>,
    /// Monte Carlo trees per level pool (default 2000).
    #[arg(long)]
    trees: Option<u32>,
    /// RNG seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Largest step on the grid; accepts forms like 1e6 (default 1e6).
    #[arg(long, value_parser = parse_steps)]
    t_max: Option<u64>,
    /// Number of grid points (default 10).
    #[arg(long)]
    points: Option<usize>,
    /// Grid spacing (default log).
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ApproxFile {
    v: Option<usize>,
    lambda: Option<f64>,
    eps: Option<f64>,
    depth: Option<usize>,
    trees: Option<u32>,
    seed: Option<u64>,
    t_max: Option<f64>,
    points: Option<usize>,
    grid: Option<GridKind>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ApproxConfig {
    v: usize,
    lambda: f64,
    eps: f64,
    depth: usize,
    trees: u32,
    seed: u64,
    t_max: u64,
    points: usize,
    grid: GridKind,
}

fn cmd_approx(args: ApproxArgs, config: Option<&Path>) -> Result<()> {
    let file: ApproxFile = load_overrides(config)?;
    let file_t_max = file.t_max.map(steps_from_f64).transpose()?;
    let v = args.v.or(file.v).unwrap_or(DEFAULT_V);
    let lambda = args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA);
    let eps = args.eps.or(file.eps).unwrap_or(DEFAULT_EPS);
    let params = ModelParams::new(v, lambda, eps)?;
    let cfg = ApproxConfig {
        v,
        lambda,
        eps,
        depth: args.depth.or(file.depth).unwrap_or_else(|| default_approx_depth(&params)),
        trees: args.trees.or(file.trees).unwrap_or(DEFAULT_TREES),
        seed: args.seed.or(file.seed).unwrap_or(0),
        t_max: args.t_max.or(file_t_max).unwrap_or(DEFAULT_T_MAX),
        points: args.points.or(file.points).unwrap_or(DEFAULT_POINTS),
        grid: args.grid.or(file.grid).unwrap_or(GridKind::Log),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let grid = make_grid(cfg.grid, cfg.t_max, cfg.points);
    let curve: Curve = branching_approx_curve(&params, cfg.depth, cfg.trees, &grid, cfg.seed)?;
    ensure_out(&out)?;
    write_text(&out.join("approx.csv"), &curve.to_csv())?;
    write_manifest(&out, "analyze approx", &cfg, &["approx.csv"])
}

#[derive(Args)]
struct FitArgs {
    /// Curve CSV to fit (required).
    #[arg(long, value_name = "CSV")]
    input: Option<PathBuf>,
    /// Number of exponential terms (default 3).
    #[arg(long)]
    k: Option<usize>,
    /// RNG seed for the randomized starts (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget per start (default 200).
    #[arg(long)]
    max_iter: Option<u32>,
    /// Relative residual-improvement stopping tolerance (default 1e-12).
    #[arg(long)]
    tol: Option<f64>,
    /// Also classify growth phases and write phases.json.
    #[arg(long)]
    phases: bool,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitFile {
    input: Option<PathBuf>,
    k: Option<usize>,
    seed: Option<u64>,
    max_iter: Option<u32>,
    tol: Option<f64>,
    phases: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitConfig {
    input: PathBuf,
    k: usize,
    seed: u64,
    max_iter: u32,
    tol: f64,
    phases: bool,
}

fn cmd_fit(args: FitArgs, config: Option<&Path>) -> Result<()> {
    let file: FitFile = load_overrides(config)?;
    let cfg = FitConfig {
        input: require(args.input.or(file.input), "input")?,
        k: args.k.or(file.k).unwrap_or(DEFAULT_FIT_TERMS),
        seed: args.seed.or(file.seed).unwrap_or(0),
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITER),
        tol: args.tol.or(file.tol).unwrap_or(DEFAULT_FIT_TOL),
        phases: args.phases || file.phases.unwrap_or(false),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let text = fs::read_to_string(&cfg.input)
        .with_context(|| format!("cannot read {}", cfg.input.display()))?;
    let curve = Curve::from_csv(&text)?;
    let points: Vec<(f64, f64)> =
        curve.steps().iter().zip(curve.mean_acc()).map(|(&t, &y)| (t as f64, y)).collect();
    let fit = fit_moe(&points, cfg.k, cfg.seed, cfg.max_iter, cfg.tol)?;
    ensure_out(&out)?;
    write_text(&out.join("fit.json"), &(fit.to_json() + "\n"))?;
    let mut outputs = vec!["fit.json"];
    if cfg.phases {
        let boundaries = classify_phases(&curve)?;
        let text = serde_json::to_string(&boundaries)
            .expect("phase serialization cannot fail")
            + "\n";
        write_text(&out.join("phases.json"), &text)?;
        outputs.push("phases.json");
    }
    write_manifest(&out, "fit", &cfg, &outputs)
}

#[derive(Args)]
struct BackendArgs {
    /// Use the deterministic offline backend.
    #[arg(long)]
    mock: bool,
    /// JSON file with HTTP backend settings; credentials come from the
    /// environment variable it names, never from the file itself.
    #[arg(long, value_name = "PATH", conflicts_with = "mock")]
    backend: Option<PathBuf>,
}

/// Backend identity echoed into manifests. The HTTP form repeats the
/// loaded settings, which never include the credential.
#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum BackendEcho {
    Mock,
    Http(HttpConfig),
}

fn resolve_backend(
    args: BackendArgs,
    file_mock: Option<bool>,
    file_backend: Option<PathBuf>,
) -> Result<(Box<dyn SynthesisBackend>, BackendEcho)> {
    let mock = args.mock || file_mock.unwrap_or(false);
    let path = args.backend.or(file_backend);
    match (mock, path) {
        (true, None) => Ok((Box::new(MockBackend), BackendEcho::Mock)),
        (false, Some(path)) => {
            let text = fs::read_to_string(&path).map_err(|e| {
                usage(format!("cannot read backend config {}: {e}", path.display()))
            })?;
            let config: HttpConfig = serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad backend config {}: {e}", path.display())))?;
            let backend = HttpBackend::new(config.clone())?;
            Ok((Box::new(backend), BackendEcho::Http(config)))
        }
        (true, Some(_)) => Err(usage("--mock conflicts with --backend")),
        (false, None) => Err(usage("pass --mock or --backend <config>")),
    }
}

/// Per-document seed so sampled triplet sets differ across documents
/// while the whole run stays a pure function of the base seed.
fn per_doc_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

#[derive(Args)]
struct PlanArgs {
    /// Source documents as JSONL with id and text fields (required).
    #[arg(long, value_name = "JSONL")]
    input: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Most triplets kept per document (default 1000).
    #[arg(long)]
    triplet_cap: Option<usize>,
    /// Base RNG seed for triplet sampling (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlanFile {
    input: Option<PathBuf>,
    mock: Option<bool>,
    backend: Option<PathBuf>,
    triplet_cap: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PlanConfig {
    input: PathBuf,
    backend: BackendEcho,
    triplet_cap: usize,
    seed: u64,
}

fn cmd_plan(args: PlanArgs, config: Option<&Path>) -> Result<()> {
    let file: PlanFile = load_overrides(config)?;
    let input = require(args.input.or(file.input), "input")?;
    let (backend, echo) = resolve_backend(args.backend, file.mock, file.backend)?;
    let cfg = PlanConfig {
        input,
        backend: echo,
        triplet_cap: args.triplet_cap.or(file.triplet_cap).unwrap_or(DEFAULT_TRIPLET_CAP),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let docs = read_documents(&cfg.input)?;
    let mut plans: Vec<EntityPlan> = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        let options =
            PlanOptions { triplet_cap: cfg.triplet_cap, seed: per_doc_seed(cfg.seed, i) };
        let plan = extract_entities(doc, backend.as_ref(), &options)
            .with_context(|| format!("planning document {:?}", doc.id()))?;
        plans.push(plan);
    }
    let text = serde_json::to_string_pretty(&plans)
        .expect("plan serialization cannot fail")
        + "\n";
    ensure_out(&out)?;
    write_text(&out.join("plans.json"), &text)?;
    write_manifest(&out, "corpus plan", &cfg, &["plans.json"])
}

#[derive(Args)]
struct SynthArgs {
    /// Source documents as JSONL with id and text fields (required).
    #[arg(long, value_name = "JSONL")]
    input: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Most triplets kept per document (default 1000).
    #[arg(long)]
    triplet_cap: Option<usize>,
    /// Base RNG seed for triplet sampling (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Generation attempts allowed per source document (default 10000).
    #[arg(long)]
    budget: Option<usize>,
    /// Output directory (default current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthFile {
    input: Option<PathBuf>,
    mock: Option<bool>,
    backend: Option<PathBuf>,
    triplet_cap: Option<usize>,
    seed: Option<u64>,
    budget: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SynthConfig {
    input: PathBuf,
    backend: BackendEcho,
    triplet_cap: usize,
    seed: u64,
    budget: usize,
}

#[derive(Serialize)]
struct SynthReport<'a> {
    documents: usize,
    total_tokens: usize,
    failures: &'a [RelationFailure],
    skipped: &'a [String],
}

fn cmd_synth(args: SynthArgs, config: Option<&Path>) -> Result<()> {
    let file: SynthFile = load_overrides(config)?;
    let input = require(args.input.or(file.input), "input")?;
    let (backend, echo) = resolve_backend(args.backend, file.mock, file.backend)?;
    let cfg = SynthConfig {
        input,
        backend: echo,
        triplet_cap: args.triplet_cap.or(file.triplet_cap).unwrap_or(DEFAULT_TRIPLET_CAP),
        seed: args.seed.or(file.seed).unwrap_or(0),
        budget: args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    let docs = read_documents(&cfg.input)?;
    let mut documents: Vec<Document> = Vec::new();
    let mut failures: Vec<RelationFailure> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut total_tokens = 0;
    for (i, doc) in docs.iter().enumerate() {
        let options =
            PlanOptions { triplet_cap: cfg.triplet_cap, seed: per_doc_seed(cfg.seed, i) };
        let plan = extract_entities(doc, backend.as_ref(), &options)
            .with_context(|| format!("planning document {:?}", doc.id()))?;
        let report = synthesize_corpus(&plan, doc, backend.as_ref(), cfg.budget, &DefaultTokenizer)
            .with_context(|| format!("generating from document {:?}", doc.id()))?;
        total_tokens += report.total_token_count();
        documents.extend_from_slice(report.documents());
        failures.extend_from_slice(report.failures());
        skipped.extend_from_slice(report.skipped());
    }
    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &documents).expect("in-memory writes cannot fail");
    ensure_out(&out)?;
    fs::write(out.join("synthetic.jsonl"), &jsonl)
        .with_context(|| format!("cannot write {}", out.join("synthetic.jsonl").display()))?;
    let report = SynthReport {
        documents: documents.len(),
        total_tokens,
        failures: &failures,
        skipped: &skipped,
    };
    let text = serde_json::to_string_pretty(&report)
        .expect("report serialization cannot fail")
        + "\n";
    write_text(&out.join("report.json"), &text)?;
    write_manifest(&out, "corpus synth", &cfg, &["synthetic.jsonl", "report.json"])
}

/// Prompt template selector as spelled on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PromptKindArg {
    EntityExtraction,
    RelationPair,
    RelationTriplet,
}

impl From<PromptKindArg> for PromptKind {
    fn from(kind: PromptKindArg) -> Self {
        match kind {
            PromptKindArg::EntityExtraction => PromptKind::EntityExtraction,
            PromptKindArg::RelationPair => PromptKind::RelationPair,
            PromptKindArg::RelationTriplet => PromptKind::RelationTriplet,
        }
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Prompt template to render (required).
    #[arg(long, value_enum)]
    kind: Option<PromptKindArg>,
    /// Source documents as JSONL with id and text fields (required).
    #[arg(long, value_name = "JSONL")]
    input: Option<PathBuf>,
    /// Document to render; defaults to the only document in the input.
    #[arg(long)]
    doc_id: Option<String>,
    /// Comma-separated entity names for relation prompts.
    #[arg(long, value_name = "NAMES")]
    entities: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RenderFile {
    kind: Option<PromptKindArg>,
    input: Option<PathBuf>,
    doc_id: Option<String>,
    entities: Option<String>,
}

fn cmd_render(args: RenderArgs, config: Option<&Path>) -> Result<()> {
    let file: RenderFile = load_overrides(config)?;
    let kind = require(args.kind.or(file.kind), "kind")?;
    let input = require(args.input.or(file.input), "input")?;
    let docs = read_documents(&input)?;
    let doc = match (args.doc_id.or(file.doc_id), docs.len()) {
        (Some(id), _) => docs
            .iter()
            .find(|d| d.id() == id)
            .ok_or_else(|| anyhow!("no document with id {id:?} in the input"))?,
        (None, 1) => &docs[0],
        (None, n) => {
            return Err(usage(format!("--doc-id is required when the input has {n} documents")))
        }
    };
    let entities: Vec<String> = args
        .entities
        .or(file.entities)
        .map(|list| {
            list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
        })
        .unwrap_or_default();
    let names: Vec<&str> = entities.iter().map(String::as_str).collect();
    let prompt = render_prompt(kind.into(), doc, &names)?;
    print!("{prompt}");
    Ok(())
}

#[derive(Args)]
struct OverlapArgs {
    /// JSONL file holding exactly one source document (required).
    #[arg(long, value_name = "JSONL")]
    source: Option<PathBuf>,
    /// JSONL file with the synthetic documents (required).
    #[arg(long, value_name = "JSONL")]
    synthetic: Option<PathBuf>,
    /// N-gram length (default 2).
    #[arg(long)]
    n: Option<usize>,
    /// Optional output directory for metrics.json and the manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OverlapFile {
    source: Option<PathBuf>,
    synthetic: Option<PathBuf>,
    n: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct OverlapConfig {
    source: PathBuf,
    synthetic: PathBuf,
    n: usize,
}

#[derive(Serialize)]
struct OverlapReport {
    n: usize,
    ngram_overlap_pct: f64,
}

fn cmd_overlap(args: OverlapArgs, config: Option<&Path>) -> Result<()> {
    let file: OverlapFile = load_overrides(config)?;
    let cfg = OverlapConfig {
        source: require(args.source.or(file.source), "source")?,
        synthetic: require(args.synthetic.or(file.synthetic), "synthetic")?,
        n: args.n.or(file.n).unwrap_or(2),
    };
    let sources = read_documents(&cfg.source)?;
    if sources.len() != 1 {
        return Err(anyhow!(
            "source file must contain exactly one document, found {}",
            sources.len()
        ));
    }
    let synthetic = read_documents(&cfg.synthetic)?;
    let pct = ngram_overlap(&sources[0], &synthetic, cfg.n, &DefaultTokenizer)?;
    println!("{pct:?}");
    if let Some(out) = args.out.or(file.out) {
        let report = OverlapReport { n: cfg.n, ngram_overlap_pct: pct };
        let text = serde_json::to_string_pretty(&report)
            .expect("report serialization cannot fail")
            + "\n";
        ensure_out(&out)?;
        write_text(&out.join("metrics.json"), &text)?;
        write_manifest(&out, "corpus metrics overlap", &cfg, &["metrics.json"])?;
    }
    Ok(())
}

#[derive(Args)]
struct DedupArgs {
    /// JSONL file with the documents to scan (required).
    #[arg(long, value_name = "JSONL")]
    input: Option<PathBuf>,
    /// Jaccard similarity above which a document counts as a duplicate
    /// (default 0.6).
    #[arg(long)]
    threshold: Option<f64>,
    /// Shingle window in tokens (default 13).
    #[arg(long)]
    window: Option<usize>,
    /// Compare every pair directly instead of using the inverted index.
    #[arg(long)]
    exact: bool,
    /// Optional output directory for metrics.json and the manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DedupFile {
    input: Option<PathBuf>,
    threshold: Option<f64>,
    window: Option<usize>,
    exact: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DedupConfig {
    input: PathBuf,
    threshold: f64,
    window: usize,
    exact: bool,
}

#[derive(Serialize)]
struct DedupReport {
    threshold: f64,
    window: usize,
    duplicate_rate: f64,
}

fn cmd_dedup(args: DedupArgs, config: Option<&Path>) -> Result<()> {
    let file: DedupFile = load_overrides(config)?;
    let cfg = DedupConfig {
        input: require(args.input.or(file.input), "input")?,
        threshold: args.threshold.or(file.threshold).unwrap_or(DEFAULT_JACCARD_THRESHOLD),
        window: args.window.or(file.window).unwrap_or(DEFAULT_SHINGLE_WINDOW),
        exact: args.exact || file.exact.unwrap_or(false),
    };
    let docs = read_documents(&cfg.input)?;
    let rate = if cfg.exact {
        duplicate_rate(&docs, cfg.threshold, cfg.window)?
    } else {
        duplicate_rate_indexed(&docs, cfg.threshold, cfg.window)?
    };
    println!("{rate:?}");
    if let Some(out) = args.out.or(file.out) {
        let report =
            DedupReport { threshold: cfg.threshold, window: cfg.window, duplicate_rate: rate };
        let text = serde_json::to_string_pretty(&report)
            .expect("report serialization cannot fail")
            + "\n";
        ensure_out(&out)?;
        write_text(&out.join("metrics.json"), &text)?;
        write_manifest(&out, "corpus metrics dedup", &cfg, &["metrics.json"])?;
    }
    Ok(())
}
