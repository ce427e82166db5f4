// SPDX-License-Identifier: MIT OR Apache-2.0

//! Candidate-trace collection and runtime benchmarking grids.
//!
//! Experiments are split into independent cells (one spec and solver each)
//! so callers can fan cells out to a worker pool; each cell owns its data
//! and RNG streams and aggregation is order-independent. Data seeds depend
//! only on the instance coordinates, never on the solver, so different
//! solvers in one experiment see identical data and stay comparable.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cost::{CostModel, TimeSeriesMatrix};
use crate::default_penalty;
use crate::dp::{op_solve_capped, pelt_solve_capped, SolveOutput};
use crate::error::{Error, Result};
use crate::geom::{geomfpop_solve_capped, FutureSelect, PastSelect, PruningConfig, PruningKind};
use crate::sim::{generate, SimSpec};

/// One solver under benchmark: the unpruned baseline, inequality pruning,
/// or geometric pruning with a shape and selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverId {
    Op,
    Pelt,
    Geom {
        kind: PruningKind,
        future: FutureSelect,
        past: PastSelect,
    },
}

impl SolverId {
    /// Default geometric configuration: box-shaped sets with the
    /// last-plus-random future and random past selections.
    pub fn geom_default() -> Self {
        let config = PruningConfig::default();
        SolverId::Geom {
            kind: config.kind,
            future: config.future_select,
            past: config.past_select,
        }
    }

    /// Stable label used in file names and CSV columns, e.g. `pelt` or
    /// `geom-r-last-random-random`.
    pub fn label(&self) -> String {
        match self {
            SolverId::Op => "op".into(),
            SolverId::Pelt => "pelt".into(),
            SolverId::Geom { kind, future, past } => {
                let kind = match kind {
                    PruningKind::SType => "geom-s",
                    PruningKind::RType => "geom-r",
                };
                let future = match future {
                    FutureSelect::All => "all",
                    FutureSelect::LastOnly => "last",
                    FutureSelect::LastPlusRandom => "last-random",
                };
                let past = match past {
                    PastSelect::All => "all",
                    PastSelect::Empty => "empty",
                    PastSelect::Random => "random",
                };
                format!("{kind}-{future}-{past}")
            }
        }
    }

    /// Runs the solver on `data`, honoring an optional deadline. `seed`
    /// feeds the geometric solvers' random selections and is ignored by the
    /// deterministic baselines.
    pub fn solve_capped(
        &self,
        data: &TimeSeriesMatrix,
        beta: f64,
        seed: u64,
        deadline: Option<Instant>,
    ) -> Result<Option<SolveOutput>> {
        match self {
            SolverId::Op => op_solve_capped(data, beta, deadline),
            SolverId::Pelt => pelt_solve_capped(data, beta, deadline),
            SolverId::Geom { kind, future, past } => {
                let config = PruningConfig {
                    kind: *kind,
                    future_select: *future,
                    past_select: *past,
                    seed,
                };
                geomfpop_solve_capped(data, beta, &config, deadline)
            }
        }
    }
}

impl std::str::FromStr for SolverId {
    type Err = Error;

    /// Parses the labels emitted by [`SolverId::label`]; the bare forms
    /// `geom-r` and `geom-s` mean the default selections.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "op" => return Ok(SolverId::Op),
            "pelt" => return Ok(SolverId::Pelt),
            "geom-r" | "geom-s" => {
                let default = SolverId::geom_default();
                let SolverId::Geom { future, past, .. } = default else {
                    unreachable!()
                };
                let kind = if s == "geom-s" {
                    PruningKind::SType
                } else {
                    PruningKind::RType
                };
                return Ok(SolverId::Geom { kind, future, past });
            }
            _ => {}
        }
        let (kind, rest) = if let Some(rest) = s.strip_prefix("geom-r-") {
            (PruningKind::RType, rest)
        } else if let Some(rest) = s.strip_prefix("geom-s-") {
            (PruningKind::SType, rest)
        } else {
            return Err(Error::config(format!("unknown solver config `{s}`")));
        };
        let (future, rest) = if let Some(r) = rest.strip_prefix("last-random-") {
            (FutureSelect::LastPlusRandom, r)
        } else if let Some(r) = rest.strip_prefix("last-") {
            (FutureSelect::LastOnly, r)
        } else if let Some(r) = rest.strip_prefix("all-") {
            (FutureSelect::All, r)
        } else {
            return Err(Error::config(format!("unknown solver config `{s}`")));
        };
        let past = match rest {
            "all" => PastSelect::All,
            "empty" => PastSelect::Empty,
            "random" => PastSelect::Random,
            _ => return Err(Error::config(format!("unknown solver config `{s}`"))),
        };
        Ok(SolverId::Geom { kind, future, past })
    }
}

/// Splitmix-style finalizer used to derive independent seeds from a base
/// seed and cell coordinates; not a statistical claim, just stream
/// separation.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(
        mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        |acc, &part| mix(acc ^ part.wrapping_add(0x9e37_79b9_7f4a_7c15)),
    )
}

/// One retained-candidate measurement: mean percentage of candidates still
/// live at time `t`, averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub p: usize,
    pub config: String,
    pub t: usize,
    pub mean_retained_pct: f64,
}

/// Logarithmically spaced probe times in `[lo, n]`, deduplicated and always
/// ending at `n`.
fn log_grid(n: usize, points: usize) -> Vec<usize> {
    let lo = 10usize.min(n).max(1);
    let (lo_ln, hi_ln) = ((lo as f64).ln(), (n as f64).ln());
    let mut grid: Vec<usize> = (0..points)
        .map(|j| {
            let frac = j as f64 / (points - 1).max(1) as f64;
            (lo_ln + frac * (hi_ln - lo_ln)).exp().round() as usize
        })
        .map(|t| t.clamp(1, n))
        .collect();
    grid.push(n);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Probe times per trace cell.
const TRACE_POINTS: usize = 40;

/// Collects the retained-candidate trace for one `(p, config)` cell on
/// Gaussian noise of length `n`: for each probe time `t`, the percentage of
/// the `t` possible candidates still live, averaged over `replicates`
/// instances.
pub fn trace_cell(
    p: usize,
    n: usize,
    replicates: usize,
    config: SolverId,
    base_seed: u64,
) -> Result<Vec<TraceRow>> {
    if n == 0 || p == 0 || replicates == 0 {
        return Err(Error::config("trace cells need n, p, replicates >= 1"));
    }
    let grid = log_grid(n, TRACE_POINTS);
    let mut sums = vec![0.0f64; grid.len()];
    for rep in 0..replicates {
        let data_seed = derive_seed(base_seed, &[p as u64, rep as u64, 0]);
        let solver_seed = derive_seed(base_seed, &[p as u64, rep as u64, 1]);
        let spec = SimSpec::new(n, p, 1, CostModel::Gaussian, data_seed);
        let (data, _) = generate(&spec)?;
        let beta = default_penalty(n, p, 1.0)?;
        let out = config
            .solve_capped(&data, beta, solver_seed, None)?
            .expect("uncapped solve");
        for (slot, &t) in grid.iter().enumerate() {
            let live = out.diagnostics.live_counts[t - 1];
            sums[slot] += 100.0 * live as f64 / t as f64;
        }
    }
    Ok(grid
        .iter()
        .zip(&sums)
        .map(|(&t, &sum)| TraceRow {
            p,
            config: config.label(),
            t,
            mean_retained_pct: sum / replicates as f64,
        })
        .collect())
}

/// Runs [`trace_cell`] over every `(p, config)` pair, serially.
pub fn candidate_trace_experiment(
    p_range: &[usize],
    n: usize,
    replicates: usize,
    configs: &[SolverId],
    base_seed: u64,
) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for &p in p_range {
        for &config in configs {
            rows.extend(trace_cell(p, n, replicates, config, base_seed)?);
        }
    }
    Ok(rows)
}

/// One benchmark cell: a simulated instance family and a solver, measured
/// over warm-up plus `replicates` timed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub experiment: String,
    pub n: usize,
    pub p: usize,
    pub segments: usize,
    pub config: SolverId,
    pub model: CostModel,
    pub amplitude: f64,
    /// Leading dimensions carrying the changes; `None` means all of them.
    pub affected_dims: Option<usize>,
    pub time_cap: Duration,
    pub replicates: usize,
    pub base_seed: u64,
}

/// One measurement row: a timed replicate, a censored attempt, or a failed
/// cell. Wall times come from a monotonic clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub experiment: String,
    pub n: usize,
    pub p: usize,
    pub segments: usize,
    pub config: String,
    pub replicate: usize,
    pub seconds: Option<f64>,
    pub censored: bool,
    pub live_at_end: Option<usize>,
    pub total_ops: Option<u64>,
    pub error: Option<String>,
}

impl BenchRecord {
    fn blank(cell: &BenchCell, replicate: usize) -> Self {
        BenchRecord {
            experiment: cell.experiment.clone(),
            n: cell.n,
            p: cell.p,
            segments: cell.segments,
            config: cell.config.label(),
            replicate,
            seconds: None,
            censored: false,
            live_at_end: None,
            total_ops: None,
            error: None,
        }
    }
}

/// Shared benchmark knobs. Defaults mirror the experiment protocol: a three
/// minute cap and the median of three timed replicates after one discarded
/// warm-up run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub time_cap: Duration,
    pub replicates: usize,
    pub base_seed: u64,
    pub model: CostModel,
    pub amplitude: f64,
    pub affected_dims: Option<usize>,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            time_cap: Duration::from_secs(180),
            replicates: 3,
            base_seed: 0,
            model: CostModel::Gaussian,
            amplitude: 1.0,
            affected_dims: None,
        }
    }
}

/// Expands a runtime grid (pure-noise instances, one segment) into cells.
pub fn runtime_cells(
    n_list: &[usize],
    p_range: &[usize],
    configs: &[SolverId],
    params: &BenchParams,
) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &n in n_list {
        for &p in p_range {
            for &config in configs {
                cells.push(BenchCell {
                    experiment: "runtime".into(),
                    n,
                    p,
                    segments: 1,
                    config,
                    model: params.model,
                    amplitude: params.amplitude,
                    affected_dims: params.affected_dims,
                    time_cap: params.time_cap,
                    replicates: params.replicates,
                    base_seed: params.base_seed,
                });
            }
        }
    }
    cells
}

/// Expands a segment-count sweep at fixed length into cells.
pub fn segments_cells(
    n_fixed: usize,
    segment_counts: &[usize],
    p_range: &[usize],
    configs: &[SolverId],
    params: &BenchParams,
) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &segments in segment_counts {
        for &p in p_range {
            for &config in configs {
                cells.push(BenchCell {
                    experiment: "segments".into(),
                    n: n_fixed,
                    p,
                    segments,
                    config,
                    model: params.model,
                    amplitude: params.amplitude,
                    affected_dims: params.affected_dims,
                    time_cap: params.time_cap,
                    replicates: params.replicates,
                    base_seed: params.base_seed,
                });
            }
        }
    }
    cells
}

/// Runs one cell: generates its instance, performs a discarded warm-up run,
/// then times the replicates. Never panics or errors; failures and censored
/// attempts come back as records so a grid keeps going.
pub fn run_bench_cell(cell: &BenchCell) -> Vec<BenchRecord> {
    let mut records = Vec::with_capacity(cell.replicates);
    let fail = |replicate: usize, message: String| {
        let mut record = BenchRecord::blank(cell, replicate);
        record.error = Some(message);
        record
    };
    let data_seed = derive_seed(
        cell.base_seed,
        &[cell.n as u64, cell.p as u64, cell.segments as u64, 0],
    );
    let mut spec = SimSpec::new(cell.n, cell.p, cell.segments, cell.model, data_seed);
    spec.amplitude = cell.amplitude;
    spec.affected_dims = cell.affected_dims.unwrap_or(cell.p);
    let (data, _) = match generate(&spec) {
        Ok(pair) => pair,
        Err(e) => return vec![fail(0, e.to_string())],
    };
    let beta = match default_penalty(cell.n, cell.p, 1.0) {
        Ok(beta) => beta,
        Err(e) => return vec![fail(0, e.to_string())],
    };
    // Warm-up plus timed replicates; replicate 0 is the first timed run.
    for attempt in 0..cell.replicates + 1 {
        let solver_seed = derive_seed(
            cell.base_seed,
            &[
                cell.n as u64,
                cell.p as u64,
                cell.segments as u64,
                1 + attempt as u64,
            ],
        );
        let deadline = Instant::now() + cell.time_cap;
        let started = Instant::now();
        let outcome = cell
            .config
            .solve_capped(&data, beta, solver_seed, Some(deadline));
        let elapsed = started.elapsed().as_secs_f64();
        let replicate = attempt.saturating_sub(1);
        match outcome {
            Err(e) => {
                records.push(fail(replicate, e.to_string()));
                break;
            }
            Ok(None) => {
                let mut record = BenchRecord::blank(cell, replicate);
                record.censored = true;
                record.seconds = Some(cell.time_cap.as_secs_f64());
                records.push(record);
                break;
            }
            Ok(Some(out)) => {
                if attempt == 0 {
                    continue;
                }
                let mut record = BenchRecord::blank(cell, replicate);
                record.seconds = Some(elapsed);
                record.live_at_end = out.diagnostics.live_counts.last().copied();
                record.total_ops = Some(
                    out.diagnostics.inter_ops.iter().sum::<u64>()
                        + out.diagnostics.excl_ops.iter().sum::<u64>(),
                );
                records.push(record);
            }
        }
    }
    records
}

/// Times every cell of a runtime grid, serially.
pub fn runtime_grid(
    n_list: &[usize],
    p_range: &[usize],
    configs: &[SolverId],
    params: &BenchParams,
) -> Vec<BenchRecord> {
    runtime_cells(n_list, p_range, configs, params)
        .iter()
        .flat_map(run_bench_cell)
        .collect()
}

/// Times every cell of a segment-count sweep, serially.
pub fn segments_sweep(
    n_fixed: usize,
    segment_counts: &[usize],
    p_range: &[usize],
    configs: &[SolverId],
    params: &BenchParams,
) -> Vec<BenchRecord> {
    segments_cells(n_fixed, segment_counts, p_range, configs, params)
        .iter()
        .flat_map(run_bench_cell)
        .collect()
}

/// Per-cell aggregate for the JSON summary: median wall time over the
/// uncensored replicates, plus censoring and failure counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub experiment: String,
    pub n: usize,
    pub p: usize,
    pub segments: usize,
    pub config: String,
    pub timed_replicates: usize,
    pub censored: usize,
    pub failed: usize,
    pub median_seconds: Option<f64>,
    pub mean_live_at_end: Option<f64>,
}

/// Median of an unordered sample; the even case averages the middle pair.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("comparable wall times"));
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// Groups records into per-cell summaries, preserving first-seen cell order.
pub fn summarize(records: &[BenchRecord]) -> Vec<CellSummary> {
    let mut order: Vec<(String, usize, usize, usize, String)> = Vec::new();
    let mut summaries: Vec<CellSummary> = Vec::new();
    for record in records {
        let key = (
            record.experiment.clone(),
            record.n,
            record.p,
            record.segments,
            record.config.clone(),
        );
        let slot = match order.iter().position(|k| *k == key) {
            Some(slot) => slot,
            None => {
                order.push(key);
                summaries.push(CellSummary {
                    experiment: record.experiment.clone(),
                    n: record.n,
                    p: record.p,
                    segments: record.segments,
                    config: record.config.clone(),
                    timed_replicates: 0,
                    censored: 0,
                    failed: 0,
                    median_seconds: None,
                    mean_live_at_end: None,
                });
                summaries.len() - 1
            }
        };
        let summary = &mut summaries[slot];
        if record.error.is_some() {
            summary.failed += 1;
        } else if record.censored {
            summary.censored += 1;
        } else {
            summary.timed_replicates += 1;
        }
    }
    for (slot, summary) in summaries.iter_mut().enumerate() {
        let key = &order[slot];
        let times: Vec<f64> = records
            .iter()
            .filter(|r| {
                r.error.is_none()
                    && !r.censored
                    && (r.experiment.clone(), r.n, r.p, r.segments, r.config.clone()) == *key
            })
            .filter_map(|r| r.seconds)
            .collect();
        summary.median_seconds = median(&times);
        let lives: Vec<f64> = records
            .iter()
            .filter(|r| (r.experiment.clone(), r.n, r.p, r.segments, r.config.clone()) == *key)
            .filter_map(|r| r.live_at_end.map(|v| v as f64))
            .collect();
        if !lives.is_empty() {
            summary.mean_live_at_end = Some(lives.iter().sum::<f64>() / lives.len() as f64);
        }
    }
    summaries
}
