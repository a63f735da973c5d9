// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvml::clustering::ViewStrategy;
use mvml::graph::BandwidthPolicy;
use mvml::optimizer::OptimizerConfig;
use mvml::pipeline::{
    eval_clustering, eval_event_pr, learn_metric, summarize, DatasetSpec, GroundTruthEvents,
    SummarizeOptions, SummaryManifest,
};
use mvml::synthbench::{run_benchmark, BenchOptions, BenchReport, SynthConfig};
use mvml::{Error, ErrorClass};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mvml",
    version,
    about = "Multi-view metric learning and keyframe summarization"
)]
struct Cli {
    /// Print human-readable tables to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn view weights, cluster the frames and emit one keyframe per cluster.
    Summarize(SummarizeArgs),
    /// Learn view weights only and emit them with the objective trace.
    LearnMetric(LearnArgs),
    /// Score a manifest against ground-truth events and/or planted labels.
    Eval(EvalArgs),
    /// Run the synthetic comparative benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// Per-view CSV feature file (one row per frame); repeat once per view.
    #[arg(long = "view", required = true)]
    views: Vec<PathBuf>,
    /// Number of clusters, which is also the summary length.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    clusters: u64,
    /// Weight of the disagreement term.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, env = "MVML_SEED", default_value_t = 0)]
    seed: u64,
    /// Fixed RBF bandwidth for every view (default: per-view median distance).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    /// Stop when an alternation lowers the objective by less than this.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Keep every N-th frame.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    stride: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    MeanSimilarity,
    FirstView,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    learn: LearnArgs,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    kmeans_iters: u64,
    /// Skip unit-normalizing embedding rows before k-means.
    #[arg(long)]
    no_row_normalize: bool,
    #[arg(long, value_enum, default_value = "mean-similarity")]
    view_strategy: StrategyArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Ground-truth events JSON: {"events":[{"start":..,"end":..,"label":..}]}.
    #[arg(long, required_unless_present = "labels")]
    events: Option<PathBuf>,
    /// Planted labels, a JSON array (or {"labels":[...]}) with one entry per analyzed frame.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    views: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    clusters: u64,
    /// Index of a view to replace with pure noise; repeatable.
    #[arg(long = "corrupt")]
    corrupt: Vec<usize>,
    /// Number of instances; seeds are consecutive starting at --seed.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, env = "MVML_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    points_per_cluster: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    latent_dim: u64,
    /// Observation noise of every clean view.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    cluster_std: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    /// Record runtimes in the report (the report is then not reproducible).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-seed metrics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Input => EXIT_USAGE,
            ErrorClass::Io => EXIT_IO,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn to_usize(v: u64) -> usize {
    usize::try_from(v).unwrap_or(usize::MAX)
}

fn check_finite(name: &str, v: f64, min: f64) -> Result<(), Failure> {
    if v.is_finite() && v >= min {
        Ok(())
    } else {
        Err(usage(format!(
            "--{name} must be a finite number >= {min}, got {v}"
        )))
    }
}

fn dataset(args: &LearnArgs) -> Result<(DatasetSpec, SummarizeOptions), Failure> {
    check_finite("gamma", args.gamma, 0.0)?;
    if !(args.tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {}", args.tol)));
    }
    let bandwidth = match args.sigma {
        None => BandwidthPolicy::Median,
        Some(s) if s > 0.0 && s.is_finite() => BandwidthPolicy::Fixed(s),
        Some(s) => return Err(usage(format!("--sigma must be positive, got {s}"))),
    };
    let mut spec = DatasetSpec::new(args.views.clone());
    spec.bandwidth = bandwidth;

    let mut optimizer = OptimizerConfig::new(to_usize(args.clusters))
        .with_gamma(args.gamma)
        .with_max_iters(to_usize(args.max_iters))
        .with_seed(args.seed);
    optimizer.tol = args.tol;
    let mut options = SummarizeOptions::new(optimizer);
    options.bandwidth = bandwidth;
    options.stride = to_usize(args.stride);
    Ok((spec, options))
}

/// Pipeline errors already name their stage; numerical ones get a label too.
fn report_stage(e: Error) -> Failure {
    let mut failure = Failure::from(e);
    if failure.code == EXIT_NUMERICAL {
        failure.message = format!("numerical failure: {}", failure.message);
    }
    failure
}

fn cmd_summarize(args: &SummarizeArgs, verbose: bool) -> Result<(), Failure> {
    let (spec, mut options) = dataset(&args.learn)?;
    options.restarts = to_usize(args.restarts);
    options.kmeans_max_iters = to_usize(args.kmeans_iters);
    options.row_normalize = !args.no_row_normalize;
    options.view_strategy = match args.view_strategy {
        StrategyArg::MeanSimilarity => ViewStrategy::MeanSimilarity,
        StrategyArg::FirstView => ViewStrategy::FirstView,
    };
    let manifest = summarize(&spec, &options).map_err(report_stage)?;
    if verbose {
        print_weights(
            manifest.weights.as_slice(),
            &manifest.sigma_per_view,
            &manifest.objective_trace,
        );
        eprintln!("{:>8} {:>8} {:>6}", "cluster", "frame", "view");
        for r in &manifest.representatives {
            eprintln!("{:>8} {:>8} {:>6}", r.cluster, r.frame, r.view);
        }
    }
    emit(args.learn.out.as_deref(), &manifest.to_json())
}

fn print_weights(weights: &[f64], sigmas: &[f64], trace: &[f64]) {
    eprintln!("{:>6} {:>12} {:>12}", "view", "weight", "sigma");
    for (k, (w, s)) in weights.iter().zip(sigmas).enumerate() {
        eprintln!("{k:>6} {w:>12.6} {s:>12.6}");
    }
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        eprintln!(
            "objective {first:.9} -> {last:.9} over {} alternations",
            trace.len() - 1
        );
    }
}

fn cmd_learn_metric(args: &LearnArgs, verbose: bool) -> Result<(), Failure> {
    let (spec, options) = dataset(args)?;
    let report = learn_metric(&spec, &options).map_err(report_stage)?;
    if verbose {
        print_weights(
            report.weights.as_slice(),
            &report.sigma_per_view,
            &report.objective_trace,
        );
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    emit(args.out.as_deref(), &text)
}

fn read_labels(path: &Path) -> Result<Vec<usize>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_failure(path, e))?;
    let array = match &value {
        serde_json::Value::Object(map) => map.get("labels").cloned(),
        other => Some(other.clone()),
    };
    array
        .and_then(|a| serde_json::from_value::<Vec<usize>>(a).ok())
        .ok_or_else(|| io_failure(path, "expected an array of non-negative integer labels"))
}

fn read_events(path: &Path) -> Result<GroundTruthEvents, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    if text.trim().is_empty() {
        return Ok(GroundTruthEvents { events: Vec::new() });
    }
    GroundTruthEvents::load(path).map_err(Failure::from)
}

fn cmd_eval(args: &EvalArgs, verbose: bool) -> Result<(), Failure> {
    let manifest = SummaryManifest::load(&args.manifest)?;
    let mut out = serde_json::Map::new();
    if let Some(path) = &args.events {
        let gt = read_events(path)?;
        let score = eval_event_pr(&manifest, &gt)?;
        out.insert("precision".into(), score.precision.into());
        out.insert("recall".into(), score.recall.into());
        if verbose {
            eprintln!(
                "precision {:.4}  recall {:.4}  ({} keyframes, {} events)",
                score.precision,
                score.recall,
                manifest.representatives.len(),
                gt.events.len()
            );
        }
    }
    if let Some(path) = &args.labels {
        let truth = read_labels(path)?;
        let score = eval_clustering(&manifest.labels, &truth)?;
        out.insert("ari".into(), score.ari.into());
        out.insert("nmi".into(), score.nmi.into());
        if verbose {
            eprintln!("ari {:.4}  nmi {:.4}", score.ari, score.nmi);
        }
    }
    let text = serde_json::to_string_pretty(&out).expect("json serializes") + "\n";
    emit(args.out.as_deref(), &text)
}

fn cmd_bench(args: &BenchArgs, verbose: bool) -> Result<(), Failure> {
    check_finite("noise", args.noise, 0.0)?;
    check_finite("cluster-std", args.cluster_std, 0.0)?;
    check_finite("gamma", args.gamma, 0.0)?;
    if !(args.separation > 0.0) || !args.separation.is_finite() {
        return Err(usage("--separation must be positive"));
    }
    if !(args.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let views = to_usize(args.views);
    let clusters = to_usize(args.clusters);
    let mut synth = SynthConfig::new(clusters, views)
        .with_noise(args.noise)
        .with_corrupted(args.corrupt.clone());
    synth.points_per_cluster = to_usize(args.points_per_cluster);
    synth.latent_dim = to_usize(args.latent_dim);
    synth.cluster_separation = args.separation;
    synth.cluster_std = args.cluster_std;
    synth.seed = args.seed;

    let mut optimizer = OptimizerConfig::new(clusters)
        .with_gamma(args.gamma)
        .with_max_iters(to_usize(args.max_iters))
        .with_seed(args.seed);
    optimizer.tol = args.tol;
    let mut options = BenchOptions::new(optimizer);
    options.restarts = to_usize(args.restarts);
    options.timings = args.timings;

    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.seed.wrapping_add(i)).collect();
    let report = run_benchmark(&synth, &seeds, &options)?;
    if verbose {
        print_bench(&report);
    }
    if let Some(path) = &args.csv {
        let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
        report.write_csv(file)?;
    }
    emit(args.out.as_deref(), &report.to_json())
}

fn print_bench(report: &BenchReport) {
    eprintln!(
        "{:<14} {:>9} {:>9} {:>9} {:>9}",
        "method", "ari", "ari_sd", "nmi", "nmi_sd"
    );
    for m in &report.methods {
        eprintln!(
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            m.method, m.ari_mean, m.ari_std, m.nmi_mean, m.nmi_std
        );
    }
    for f in &report.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Summarize(args) => cmd_summarize(args, cli.verbose),
        Command::LearnMetric(args) => cmd_learn_metric(args, cli.verbose),
        Command::Eval(args) => cmd_eval(args, cli.verbose),
        Command::Bench(args) => cmd_bench(args, cli.verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
