// SPDX-License-Identifier: MIT OR Apache-2.0

//! Geometric candidate pruning on top of the dynamic-programming core.
//!
//! Each live candidate carries a testing set, a superset of the parameter
//! region where that candidate is still the best last change. Every step
//! builds sub-level comparison sets against the newly solved prefix cost,
//! intersects the testing set with future sets, carves out past sets, and
//! removes the candidate once its testing set is provably empty. The
//! partition itself always comes from the shared best-cost scan, so pruning
//! quality affects speed, never the answer.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{CostModel, TimeSeriesMatrix};
use crate::dp::{backtrack, segment_cost_between, validate_beta, Diagnostics, RunState,
    Segmentation, SolveOutput};
use crate::error::{Error, Result};
use crate::geometry::{rect_excl_mut, rect_inter_mut, sset_excl, sset_inter, Ball, BallSet,
    HyperRect, SublevelSet};

/// Shape of the per-candidate testing set.
///
/// `SType` keeps a single ball and is limited to the Gaussian model, where
/// comparison sets are exact balls. `RType` keeps an axis-aligned box and
/// works for every model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruningKind {
    SType,
    RType,
}

/// Which future comparison sets to apply each step. Every choice applies the
/// most recent set; the others trade extra operator work for tighter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FutureSelect {
    /// Every set from the candidate's birth time through the current step.
    All,
    /// Only the most recent set.
    LastOnly,
    /// The most recent set plus one uniformly drawn earlier one.
    LastPlusRandom,
}

/// Which past comparison sets to carve out each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastSelect {
    /// One set per earlier candidate that is still live.
    All,
    /// No past sets.
    Empty,
    /// One set against a uniformly drawn earlier position.
    Random,
}

/// Full pruning strategy: testing-set shape, selection rules, and the seed
/// feeding the random selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruningConfig {
    pub kind: PruningKind,
    pub future_select: FutureSelect,
    pub past_select: PastSelect,
    pub seed: u64,
}

impl Default for PruningConfig {
    /// Box-shaped sets with the cheap randomized selections: at most three
    /// operator applications per live candidate per step.
    fn default() -> Self {
        PruningConfig {
            kind: PruningKind::RType,
            future_select: FutureSelect::LastPlusRandom,
            past_select: PastSelect::Random,
            seed: 0,
        }
    }
}

/// Testing set carried by one candidate: a box, or a ball-algebra state.
#[derive(Debug, Clone, PartialEq)]
pub enum TestingSet {
    Rect(HyperRect),
    Ball(BallSet),
}

impl TestingSet {
    pub fn is_empty(&self) -> bool {
        match self {
            TestingSet::Rect(r) => r.is_empty(),
            TestingSet::Ball(b) => b.is_empty(),
        }
    }
}

/// A live change-point candidate: last-segment start `tau` plus the testing
/// set that keeps it alive.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tau: usize,
    pub testing_set: TestingSet,
}

impl Candidate {
    fn fresh(tau: usize, kind: PruningKind, model: &CostModel, p: usize) -> Self {
        let testing_set = match kind {
            PruningKind::RType => TestingSet::Rect(HyperRect::full_domain(model, p)),
            PruningKind::SType => TestingSet::Ball(BallSet::Full),
        };
        Candidate { tau, testing_set }
    }
}

/// Counts operator applications during testing-set updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub inter: u64,
    pub excl: u64,
}

/// Builds the future comparison sets for candidate `tau` at step `t`, most
/// recent set last.
///
/// `All` returns one set per live position in `live` between `tau` (its own
/// trivial full-space set) and `t - 1`, plus the set at `t`; restricting to
/// live positions keeps the per-candidate work proportional to the live
/// count. `LastOnly` returns only the set at `t`; `LastPlusRandom` returns a
/// uniform draw over threshold times `tau..=t` followed by the set at `t`
/// (the draw may duplicate it).
pub fn select_future<'a>(
    data: &'a TimeSeriesMatrix,
    qhat: &'a [f64],
    live: &[usize],
    tau: usize,
    t: usize,
    select: FutureSelect,
    rng: &mut ChaCha8Rng,
) -> Vec<SublevelSet<'a>> {
    let mut sets = Vec::new();
    select_future_into(data, qhat, live, tau, t, select, rng, &mut sets);
    sets
}

/// Buffer-reusing form of [`select_future`]; clears `out` and fills it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn select_future_into<'a>(
    data: &'a TimeSeriesMatrix,
    qhat: &[f64],
    live: &[usize],
    tau: usize,
    t: usize,
    select: FutureSelect,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<SublevelSet<'a>>,
) {
    assert!(tau <= t && t < qhat.len(), "future sets need tau <= t <= n");
    out.clear();
    let pair = |v: usize| SublevelSet::new(data, tau, v, qhat[v] - qhat[tau]);
    match select {
        FutureSelect::All => {
            out.extend(
                live.iter()
                    .copied()
                    .filter(|&v| v >= tau && v < t)
                    .map(pair),
            );
            out.push(pair(t));
        }
        FutureSelect::LastOnly => out.push(pair(t)),
        FutureSelect::LastPlusRandom => {
            let v = rng.random_range(tau..=t);
            out.push(pair(v));
            out.push(pair(t));
        }
    }
}

/// Builds the past comparison sets for candidate `tau`: sets that favor an
/// earlier change position `u < tau`.
///
/// `All` covers the still-live earlier positions in `live` (ascending);
/// `Random` draws one position uniformly from `0..tau` whether or not it is
/// still live. A candidate at position 0 has no past and draws nothing.
pub fn select_past<'a>(
    data: &'a TimeSeriesMatrix,
    qhat: &'a [f64],
    live: &[usize],
    tau: usize,
    select: PastSelect,
    rng: &mut ChaCha8Rng,
) -> Vec<SublevelSet<'a>> {
    let mut sets = Vec::new();
    select_past_into(data, qhat, live, tau, select, rng, &mut sets);
    sets
}

/// Buffer-reusing form of [`select_past`]; clears `out` and fills it.
pub(crate) fn select_past_into<'a>(
    data: &'a TimeSeriesMatrix,
    qhat: &[f64],
    live: &[usize],
    tau: usize,
    select: PastSelect,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<SublevelSet<'a>>,
) {
    assert!(tau < qhat.len(), "past sets need tau <= n");
    out.clear();
    if tau == 0 {
        return;
    }
    let pair = |u: usize| SublevelSet::new(data, u, tau, qhat[tau] - qhat[u]);
    match select {
        PastSelect::All => out.extend(live.iter().copied().filter(|&u| u < tau).map(pair)),
        PastSelect::Empty => {}
        PastSelect::Random => out.push(pair(rng.random_range(0..tau))),
    }
}

fn ball_state(set: &SublevelSet<'_>) -> Result<BallSet> {
    if set.is_full_space() {
        return Ok(BallSet::Full);
    }
    Ok(BallSet::from_ball(Ball::from_set(set)?))
}

/// Applies one step's selections to a candidate's testing set: futures by
/// intersection in listed order, then pasts by exclusion, stopping early
/// once the set is empty.
///
/// For ball-shaped sets the state is checked against every selection and
/// then replaced by the final future selection (the most recent set), so a
/// surviving candidate always carries that set into the next step.
pub fn update_testing_set(
    candidate: &mut Candidate,
    futures: &[SublevelSet<'_>],
    pasts: &[SublevelSet<'_>],
    counts: &mut OpCounts,
) -> Result<()> {
    match &mut candidate.testing_set {
        TestingSet::Rect(rect) => {
            for s in futures {
                if rect.is_empty() {
                    return Ok(());
                }
                counts.inter += 1;
                rect_inter_mut(rect, s);
            }
            for s in pasts {
                if rect.is_empty() {
                    return Ok(());
                }
                counts.excl += 1;
                rect_excl_mut(rect, s);
            }
        }
        TestingSet::Ball(state) => {
            for s in futures {
                if state.is_empty() {
                    return Ok(());
                }
                counts.inter += 1;
                *state = sset_inter(state, &ball_state(s)?);
            }
            for s in pasts {
                if state.is_empty() {
                    return Ok(());
                }
                counts.excl += 1;
                *state = sset_excl(state, &ball_state(s)?);
            }
            if !state.is_empty() {
                if let Some(last) = futures.last() {
                    *state = ball_state(last)?;
                }
            }
        }
    }
    Ok(())
}

/// Exact solver with geometric pruning; the partition always equals the
/// unpruned solver's.
pub fn geomfpop_solve(
    data: &TimeSeriesMatrix,
    beta: f64,
    config: &PruningConfig,
) -> Result<SolveOutput> {
    Ok(run_geom(data, beta, config, None, &mut |_, _, _| {})?.expect("uncapped solve"))
}

/// Time-capped variant used by the benchmark harness; `None` means the
/// deadline passed mid-solve.
pub fn geomfpop_solve_capped(
    data: &TimeSeriesMatrix,
    beta: f64,
    config: &PruningConfig,
    deadline: Option<Instant>,
) -> Result<Option<SolveOutput>> {
    run_geom(data, beta, config, deadline, &mut |_, _, _| {})
}

/// Per-step callback: `(t, prefix costs so far, live candidates)`.
type StepObserver<'a> = dyn FnMut(usize, &[f64], &[Candidate]) + 'a;

/// Observer variant for invariants that need per-step state: called after
/// each step.
#[cfg(test)]
pub(crate) fn geomfpop_solve_observed(
    data: &TimeSeriesMatrix,
    beta: f64,
    config: &PruningConfig,
    observer: &mut StepObserver<'_>,
) -> Result<SolveOutput> {
    Ok(run_geom(data, beta, config, None, observer)?.expect("uncapped solve"))
}

fn run_geom(
    data: &TimeSeriesMatrix,
    beta: f64,
    config: &PruningConfig,
    deadline: Option<Instant>,
    observer: &mut StepObserver<'_>,
) -> Result<Option<SolveOutput>> {
    validate_beta(beta)?;
    if config.kind == PruningKind::SType && *data.model() != CostModel::Gaussian {
        return Err(Error::unsupported(format!(
            "ball-shaped testing sets require the gaussian model, got {}",
            data.model().name()
        )));
    }
    let n = data.n();
    let p = data.p();
    let model = *data.model();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut qhat = vec![0.0; n + 1];
    let mut tauhat = vec![0usize; n + 1];
    let mut candidates: Vec<Candidate> = Vec::with_capacity(256);
    let mut live_counts = Vec::with_capacity(n);
    let mut pruned_at = vec![None; n];
    let mut inter_ops = Vec::with_capacity(n);
    let mut excl_ops = Vec::with_capacity(n);
    // Per-solve scratch, reused every step: comparison sets only borrow the
    // data matrix, so holding them across prefix-cost writes is fine.
    let mut kept: Vec<Candidate> = Vec::with_capacity(256);
    let mut kept_taus: Vec<usize> = Vec::with_capacity(256);
    let mut sweep_taus: Vec<usize> = Vec::with_capacity(256);
    let mut futures_buf: Vec<SublevelSet<'_>> = Vec::new();
    let mut pasts_buf: Vec<SublevelSet<'_>> = Vec::new();
    for t in 1..=n {
        if let Some(limit) = deadline {
            if t % 64 == 0 && Instant::now() >= limit {
                return Ok(None);
            }
        }
        let mut best = f64::INFINITY;
        let mut best_tau = t - 1;
        for cand in &candidates {
            let score = qhat[cand.tau] + segment_cost_between(data, cand.tau, t);
            if score < best {
                best = score;
                best_tau = cand.tau;
            }
        }
        let fresh = qhat[t - 1] + segment_cost_between(data, t - 1, t);
        if fresh < best {
            best = fresh;
            best_tau = t - 1;
        }
        qhat[t] = best + beta;
        tauhat[t] = best_tau;
        // Geometric sweep in ascending candidate order; removals take effect
        // immediately, so later candidates' live-past selections already see
        // them. Random draws happen per candidate, futures before pasts.
        let mut counts = OpCounts::default();
        kept.clear();
        kept_taus.clear();
        sweep_taus.clear();
        sweep_taus.extend(candidates.iter().map(|c| c.tau));
        for (idx, mut cand) in candidates.drain(..).enumerate() {
            select_future_into(
                data,
                &qhat,
                &sweep_taus[idx..],
                cand.tau,
                t,
                config.future_select,
                &mut rng,
                &mut futures_buf,
            );
            select_past_into(
                data,
                &qhat,
                &kept_taus,
                cand.tau,
                config.past_select,
                &mut rng,
                &mut pasts_buf,
            );
            update_testing_set(&mut cand, &futures_buf, &pasts_buf, &mut counts)?;
            if cand.testing_set.is_empty() {
                pruned_at[cand.tau] = Some(t);
            } else {
                kept_taus.push(cand.tau);
                kept.push(cand);
            }
        }
        kept.push(Candidate::fresh(t - 1, config.kind, &model, p));
        std::mem::swap(&mut candidates, &mut kept);
        live_counts.push(candidates.len());
        inter_ops.push(counts.inter);
        excl_ops.push(counts.excl);
        observer(t, &qhat[..=t], &candidates);
    }
    let changepoints = backtrack(&tauhat, n);
    let segmentation = Segmentation {
        segment_count: changepoints.len() + 1,
        total_cost: qhat[n],
        changepoints,
    };
    let live: Vec<usize> = candidates.iter().map(|c| c.tau).collect();
    Ok(Some(SolveOutput {
        segmentation,
        state: RunState {
            beta,
            qhat,
            tauhat,
            candidates: live,
        },
        diagnostics: Diagnostics {
            live_counts,
            pruned_at,
            inter_ops,
            excl_ops,
        },
    }))
}
