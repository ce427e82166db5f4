// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front door: detect change points in CSV data, simulate
//! instances, and drive trace/benchmark experiments.
//!
//! Exit codes: 0 success, 2 malformed or unreadable/unwritable input,
//! 3 domain violation (reported with row and column), 4 invalid flag
//! combination.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use geomseg_core::bench::{
    run_bench_cell, runtime_cells, segments_cells, summarize, trace_cell, BenchCell, BenchParams,
    BenchRecord, SolverId, TraceRow,
};
use geomseg_core::io::{
    read_matrix_csv, write_bench_csv, write_diagnostics_csv, write_matrix_csv, write_trace_csv,
    write_truth_csv,
};
use geomseg_core::{
    default_penalty, estimate_sigma, generate, CostModel, Error, FutureSelect, PastSelect,
    PruningConfig, PruningKind, Result, SimSpec, SolveOutput, TimeSeriesMatrix,
};

/// Version tag for every JSON document this binary emits.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "geomseg",
    version,
    about = "Multivariate change-point detection with geometric pruning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect change points in a CSV matrix and print a JSON report.
    Detect(DetectArgs),
    /// Generate a synthetic instance and write data plus a truth sidecar.
    Simulate(SimulateArgs),
    /// Collect retained-candidate traces over a (p, config) grid.
    Trace(TraceArgs),
    /// Time solver configurations over an instance grid.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Observation model: gaussian, poisson, or negbin.
    #[arg(long, default_value = "gaussian")]
    model: String,
    /// Negative binomial dispersion; required with --model negbin.
    #[arg(long)]
    phi: Option<f64>,
}

impl ModelArgs {
    fn build(&self) -> Result<CostModel> {
        let model = match self.model.as_str() {
            "gaussian" => CostModel::Gaussian,
            "poisson" => CostModel::Poisson,
            "negbin" => {
                let phi = self.phi.ok_or_else(|| {
                    Error::config("--model negbin requires --phi <dispersion>")
                })?;
                CostModel::NegBin { phi }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown model `{other}` (expected gaussian, poisson, or negbin)"
                )))
            }
        };
        if self.phi.is_some() && !matches!(model, CostModel::NegBin { .. }) {
            return Err(Error::config("--phi only applies to --model negbin"));
        }
        model.validate()?;
        Ok(model)
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Input CSV; the first row is skipped when it is not fully numeric.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Noise standard deviation used to derive the penalty.
    #[arg(long)]
    sigma: Option<f64>,
    /// Per-segment penalty; overrides --sigma with a warning when both are
    /// given.
    #[arg(long)]
    beta: Option<f64>,
    /// Candidate pruning: op, pelt, geom-s, or geom-r.
    #[arg(long, default_value = "geom-r")]
    pruning: String,
    /// Future comparison-set selection for geometric pruning: all, last, or
    /// last-random.
    #[arg(long, default_value = "last-random")]
    future: String,
    /// Past comparison-set selection for geometric pruning: all, empty, or
    /// random.
    #[arg(long, default_value = "random")]
    past: String,
    /// RNG seed for random selections; falls back to GEOMSEG_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Write per-step diagnostics (live candidates, operation counts) here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    segments: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Mean shift between consecutive segments.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Leading dimensions that carry the changes; defaults to all.
    #[arg(long)]
    affected_dims: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output data CSV.
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar path; defaults to the data path with a `.truth.csv`
    /// suffix.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Series length per instance.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Comma-separated dimensions, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    p_list: Vec<String>,
    /// Comma-separated solver configs, e.g. pelt,geom-r-all-all.
    #[arg(long, value_delimiter = ',', default_value = "pelt,geom-r")]
    configs: Vec<String>,
    /// Instances averaged per cell.
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size for independent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for per-cell CSVs and the JSON summary.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated series lengths.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<String>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    p_list: Vec<String>,
    /// Comma-separated solver configs.
    #[arg(long, value_delimiter = ',', default_value = "pelt,geom-r")]
    configs: Vec<String>,
    /// Timed replicates per cell (after one discarded warm-up).
    #[arg(long, default_value_t = 3)]
    replicates: usize,
    /// Per-run wall-time cap in seconds; slower runs are censored.
    #[arg(long, default_value_t = 180.0)]
    time_cap: f64,
    /// Segment counts: presence switches to the fixed-length segment sweep,
    /// which needs exactly one entry in --n-list.
    #[arg(long, value_delimiter = ',')]
    segments_list: Vec<String>,
    #[command(flatten)]
    model: ModelArgs,
    /// Mean shift between consecutive segments.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Leading dimensions that carry the changes; defaults to all.
    #[arg(long)]
    affected_dims: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size for independent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for per-cell CSVs and the JSON summary.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Final detection report; the JSON schema is stable and versioned.
#[derive(Serialize)]
struct DetectReport {
    schema_version: u32,
    algorithm: String,
    changepoints: Vec<usize>,
    segment_count: usize,
    total_cost: f64,
    beta_used: f64,
    sigma_used: Option<f64>,
    wall_time: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Detect(args) => run_detect(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Trace(args) => run_trace(&args),
        Command::Bench(args) => run_bench(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Io { .. } => 2,
        Error::Domain(_) | Error::DomainAt { .. } => 3,
        Error::Config(_) | Error::Unsupported(_) => 4,
    }
}

/// Explicit flag, then the GEOMSEG_SEED environment variable, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("GEOMSEG_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("GEOMSEG_SEED must be an unsigned integer, got `{text}`"))),
        Err(_) => Ok(0),
    }
}

fn parse_configs(labels: &[String]) -> Result<Vec<SolverId>> {
    if labels.is_empty() {
        return Err(Error::config("--configs needs at least one entry"));
    }
    labels.iter().map(|label| label.parse()).collect()
}

/// Parses a comma-separated count list; empty lists and bad tokens are flag
/// errors, not input errors.
fn parse_usize_list(tokens: &[String], flag: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = tokens
        .iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::config(format!("{flag}: `{t}` is not a positive integer")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::config(format!("{flag} needs at least one entry")));
    }
    Ok(values)
}

/// Parses the pruning flags into a solver choice; validated before any
/// input is read so flag errors always exit 4.
fn parse_solver_flags(args: &DetectArgs) -> Result<SolverId> {
    let kind = match args.pruning.as_str() {
        "op" => return Ok(SolverId::Op),
        "pelt" => return Ok(SolverId::Pelt),
        "geom-s" => PruningKind::SType,
        "geom-r" => PruningKind::RType,
        other => {
            return Err(Error::config(format!(
                "unknown pruning `{other}` (expected op, pelt, geom-s, or geom-r)"
            )))
        }
    };
    let future = match args.future.as_str() {
        "all" => FutureSelect::All,
        "last" => FutureSelect::LastOnly,
        "last-random" => FutureSelect::LastPlusRandom,
        other => {
            return Err(Error::config(format!(
                "unknown future selection `{other}` (expected all, last, or last-random)"
            )))
        }
    };
    let past = match args.past.as_str() {
        "all" => PastSelect::All,
        "empty" => PastSelect::Empty,
        "random" => PastSelect::Random,
        other => {
            return Err(Error::config(format!(
                "unknown past selection `{other}` (expected all, empty, or random)"
            )))
        }
    };
    Ok(SolverId::Geom { kind, future, past })
}

fn run_solver(
    solver: SolverId,
    data: &TimeSeriesMatrix,
    beta: f64,
    seed: u64,
) -> Result<SolveOutput> {
    match solver {
        SolverId::Op => geomseg_core::op_solve(data, beta),
        SolverId::Pelt => geomseg_core::pelt_solve(data, beta),
        SolverId::Geom { kind, future, past } => {
            let config = PruningConfig {
                kind,
                future_select: future,
                past_select: past,
                seed,
            };
            geomseg_core::geomfpop_solve(data, beta, &config)
        }
    }
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let model = args.model.build()?;
    let solver = parse_solver_flags(args)?;
    if matches!(
        solver,
        SolverId::Geom {
            kind: PruningKind::SType,
            ..
        }
    ) && model != CostModel::Gaussian
    {
        return Err(Error::config(format!(
            "--pruning geom-s supports only the gaussian model, got {}",
            model.name()
        )));
    }
    let seed = resolve_seed(args.seed)?;
    let data = read_matrix_csv(&args.input, model)?;
    if let Some(sigma) = args.sigma {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config(format!("--sigma must be positive, got {sigma}")));
        }
    }
    let (beta, sigma_used) = match (args.beta, args.sigma) {
        (Some(beta), Some(sigma)) => {
            eprintln!("warning: both --beta and --sigma given; --beta {beta} wins");
            (beta, Some(sigma))
        }
        (Some(beta), None) => (beta, None),
        (None, Some(sigma)) => (default_penalty(data.n(), data.p(), sigma)?, Some(sigma)),
        (None, None) => {
            let sigma = estimate_sigma(&data)?;
            (default_penalty(data.n(), data.p(), sigma)?, Some(sigma))
        }
    };
    let started = Instant::now();
    let out = run_solver(solver, &data, beta, seed)?;
    let wall_time = started.elapsed().as_secs_f64();
    if let Some(trace_path) = &args.trace_out {
        write_diagnostics_csv(trace_path, &out.diagnostics)?;
    }
    let report = DetectReport {
        schema_version: SCHEMA_VERSION,
        algorithm: solver.label(),
        changepoints: out.segmentation.changepoints,
        segment_count: out.segmentation.segment_count,
        total_cost: out.segmentation.total_cost,
        beta_used: beta,
        sigma_used,
        wall_time,
    };
    emit_json(&report, args.out.as_deref())
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::input(format!("JSON encoding failed: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(path.display().to_string(), e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let model = args.model.build()?;
    let mut spec = SimSpec::new(args.n, args.p, args.segments, model, resolve_seed(args.seed)?);
    spec.amplitude = args.amplitude;
    spec.affected_dims = args.affected_dims.unwrap_or(args.p);
    let (data, truth) = generate(&spec)?;
    write_matrix_csv(&args.out, &data)?;
    let truth_path = args
        .truth_out
        .clone()
        .unwrap_or_else(|| default_truth_path(&args.out));
    write_truth_csv(&truth_path, &truth)
}

/// `data.csv` gets its sidecar at `data.truth.csv`.
fn default_truth_path(data_path: &Path) -> PathBuf {
    let mut name = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    name.push_str(".truth.csv");
    data_path.with_file_name(name)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Runs `work` over cells on a pool of `jobs` workers, preserving cell
/// order in the result.
fn fan_out<C, R, F>(cells: Vec<C>, jobs: usize, work: F) -> Result<Vec<R>>
where
    C: Send + Sync,
    R: Send,
    F: Fn(&C) -> R + Sync,
{
    if jobs <= 1 {
        return Ok(cells.iter().map(&work).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot build a pool of {jobs} workers: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(&work).collect()))
}

/// One trace cell outcome for the JSON summary.
#[derive(Serialize)]
struct TraceCellSummary {
    p: usize,
    config: String,
    file: Option<String>,
    rows: usize,
    error: Option<String>,
}

#[derive(Serialize)]
struct TraceSummary {
    schema_version: u32,
    experiment: String,
    n: usize,
    replicates: usize,
    seed: u64,
    cells: Vec<TraceCellSummary>,
}

fn run_trace(args: &TraceArgs) -> Result<()> {
    let p_list = parse_usize_list(&args.p_list, "--p-list")?;
    let configs = parse_configs(&args.configs)?;
    if args.replicates == 0 || args.n == 0 {
        return Err(Error::config("--replicates and --n must be at least 1"));
    }
    let seed = resolve_seed(args.seed)?;
    ensure_dir(&args.out_dir)?;
    let cells: Vec<(usize, SolverId)> = p_list
        .iter()
        .flat_map(|&p| configs.iter().map(move |&c| (p, c)))
        .collect();
    let results: Vec<(usize, SolverId, Result<Vec<TraceRow>>)> =
        fan_out(cells, args.jobs, |&(p, config)| {
            (p, config, trace_cell(p, args.n, args.replicates, config, seed))
        })?;
    let mut summaries = Vec::new();
    for (p, config, outcome) in results {
        let label = config.label();
        match outcome {
            Ok(rows) => {
                let file = format!("trace_{p}_{label}.csv");
                write_trace_csv(&args.out_dir.join(&file), &rows)?;
                summaries.push(TraceCellSummary {
                    p,
                    config: label,
                    file: Some(file),
                    rows: rows.len(),
                    error: None,
                });
            }
            Err(e) => summaries.push(TraceCellSummary {
                p,
                config: label,
                file: None,
                rows: 0,
                error: Some(e.to_string()),
            }),
        }
    }
    let summary = TraceSummary {
        schema_version: SCHEMA_VERSION,
        experiment: "trace".into(),
        n: args.n,
        replicates: args.replicates,
        seed,
        cells: summaries,
    };
    emit_json(&summary, Some(&args.out_dir.join("trace_summary.json")))
}

#[derive(Serialize)]
struct BenchSummary {
    schema_version: u32,
    experiment: String,
    seed: u64,
    time_cap_seconds: f64,
    files: Vec<String>,
    cells: Vec<geomseg_core::bench::CellSummary>,
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let n_list = parse_usize_list(&args.n_list, "--n-list")?;
    let p_list = parse_usize_list(&args.p_list, "--p-list")?;
    let segments_list: Vec<usize> = args
        .segments_list
        .iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>().map_err(|_| {
                Error::config(format!("--segments-list: `{t}` is not a positive integer"))
            })
        })
        .collect::<Result<_>>()?;
    let configs = parse_configs(&args.configs)?;
    if args.replicates == 0 {
        return Err(Error::config("--replicates must be at least 1"));
    }
    if !(args.time_cap.is_finite() && args.time_cap > 0.0) {
        return Err(Error::config(format!(
            "--time-cap must be positive seconds, got {}",
            args.time_cap
        )));
    }
    let seed = resolve_seed(args.seed)?;
    let params = BenchParams {
        time_cap: Duration::from_secs_f64(args.time_cap),
        replicates: args.replicates,
        base_seed: seed,
        model: args.model.build()?,
        amplitude: args.amplitude,
        affected_dims: args.affected_dims,
    };
    let (experiment, cells): (&str, Vec<BenchCell>) = if segments_list.is_empty() {
        ("runtime", runtime_cells(&n_list, &p_list, &configs, &params))
    } else {
        if n_list.len() != 1 {
            return Err(Error::config(
                "--segments-list needs exactly one length in --n-list",
            ));
        }
        (
            "segments",
            segments_cells(n_list[0], &segments_list, &p_list, &configs, &params),
        )
    };
    ensure_dir(&args.out_dir)?;
    let records: Vec<BenchRecord> = fan_out(cells, args.jobs, run_bench_cell)?
        .into_iter()
        .flatten()
        .collect();
    // One file per (p, config) pair, named {experiment}_{p}_{config}.csv.
    let mut files = Vec::new();
    for &p in &p_list {
        for config in &configs {
            let label = config.label();
            let slice: Vec<BenchRecord> = records
                .iter()
                .filter(|r| r.p == p && r.config == label)
                .cloned()
                .collect();
            let file = format!("{experiment}_{p}_{label}.csv");
            write_bench_csv(&args.out_dir.join(&file), &slice)?;
            files.push(file);
        }
    }
    let summary = BenchSummary {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.into(),
        seed,
        time_cap_seconds: args.time_cap,
        files,
        cells: summarize(&records),
    };
    emit_json(&summary, Some(&args.out_dir.join(format!("{experiment}_summary.json"))))
}
