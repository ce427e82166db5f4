// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dynamic-programming core for penalized optimal partitioning.
//!
//! `qhat[t]` is the best penalized cost of the first `t` rows, with one
//! penalty per segment; `tauhat[t]` stores the last change position of an
//! optimal partition, and candidate last-change positions survive from step
//! to step unless a pruning rule removes them. The no-pruning and
//! inequality-pruning solvers live here; geometric pruning shares this loop
//! and differs only in its removal rule.

use std::time::Instant;

use crate::cost::TimeSeriesMatrix;
use crate::error::{Error, Result};

/// Optimal partition of a series: change positions `tau` (strictly
/// increasing, each in `1..n`), meaning segments `(0..tau_1], ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub changepoints: Vec<usize>,
    pub segment_count: usize,
    /// Sum of segment costs plus one penalty per segment; equals `qhat[n]`.
    pub total_cost: f64,
}

/// Full solver state after a run: optimal prefix costs, last-change choices,
/// surviving candidates, and the penalty used.
#[derive(Debug, Clone)]
pub struct RunState {
    pub beta: f64,
    /// `qhat[t]` for `t = 0..=n`; `qhat[0] = 0`.
    pub qhat: Vec<f64>,
    /// `tauhat[t]` for `t = 1..=n`; entry 0 is unused.
    pub tauhat: Vec<usize>,
    /// Live candidate last-change positions after the final step, ascending.
    pub candidates: Vec<usize>,
}

/// Per-step accounting captured during a solve.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Live candidate count after each step `t = 1..=n` (post-append).
    pub live_counts: Vec<usize>,
    /// For each candidate position `0..n`, the step at which it was removed.
    pub pruned_at: Vec<Option<usize>>,
    /// Geometric solvers only: intersection operator applications per step.
    pub inter_ops: Vec<u64>,
    /// Geometric solvers only: exclusion operator applications per step.
    pub excl_ops: Vec<u64>,
}

/// A solved instance: the partition plus the state and accounting behind it.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub segmentation: Segmentation,
    pub state: RunState,
    pub diagnostics: Diagnostics,
}

pub(crate) fn validate_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::config(format!(
            "penalty must be a nonnegative finite number, got {beta}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn segment_cost_between(data: &TimeSeriesMatrix, start: usize, end: usize) -> f64 {
    data.stats(start, end).cost()
}

/// Scores every candidate in `candidates` plus, when absent, the fresh
/// candidate `t - 1`, and returns `(qhat_t, tauhat_t)`: minimum score plus
/// penalty, and the smallest minimizing position.
pub fn best_cost_best_tau(
    data: &TimeSeriesMatrix,
    state: &RunState,
    t: usize,
) -> (f64, usize) {
    assert!(t >= 1 && t <= data.n(), "step {t} out of range");
    let mut best = f64::INFINITY;
    let mut best_tau = t - 1;
    for &c in &state.candidates {
        assert!(c < t, "candidate {c} not usable at step {t}");
        let score = state.qhat[c] + segment_cost_between(data, c, t);
        if score < best {
            best = score;
            best_tau = c;
        }
    }
    if !state.candidates.contains(&(t - 1)) {
        let score = state.qhat[t - 1] + segment_cost_between(data, t - 1, t);
        if score < best {
            best = score;
            best_tau = t - 1;
        }
    }
    (best + state.beta, best_tau)
}

/// Reads the change positions out of the stored last-change choices:
/// follow `tauhat` back from `n`, collecting nonzero positions.
pub fn backtrack(tauhat: &[usize], n: usize) -> Vec<usize> {
    assert!(n < tauhat.len(), "no stored choice for step {n}");
    let mut cps = Vec::new();
    let mut t = n;
    while t > 0 {
        let tau = tauhat[t];
        debug_assert!(tau < t, "stored choices must strictly decrease");
        if tau > 0 {
            cps.push(tau);
        }
        t = tau;
    }
    cps.reverse();
    cps
}

#[derive(Clone, Copy, PartialEq)]
enum InequalityPruning {
    Off,
    On,
}

/// Exact solver without candidate pruning; the O(n^2) reference.
pub fn op_solve(data: &TimeSeriesMatrix, beta: f64) -> Result<SolveOutput> {
    Ok(run_dp(data, beta, InequalityPruning::Off, None)?.expect("uncapped solve"))
}

/// Exact solver with inequality-based pruning: a candidate is removed at
/// step `t` when its unpenalized score reaches `qhat[t]`.
pub fn pelt_solve(data: &TimeSeriesMatrix, beta: f64) -> Result<SolveOutput> {
    Ok(run_dp(data, beta, InequalityPruning::On, None)?.expect("uncapped solve"))
}

/// Time-capped variants used by the benchmark harness; `None` means the
/// deadline passed mid-solve.
pub fn op_solve_capped(
    data: &TimeSeriesMatrix,
    beta: f64,
    deadline: Option<Instant>,
) -> Result<Option<SolveOutput>> {
    run_dp(data, beta, InequalityPruning::Off, deadline)
}

pub fn pelt_solve_capped(
    data: &TimeSeriesMatrix,
    beta: f64,
    deadline: Option<Instant>,
) -> Result<Option<SolveOutput>> {
    run_dp(data, beta, InequalityPruning::On, deadline)
}

fn run_dp(
    data: &TimeSeriesMatrix,
    beta: f64,
    pruning: InequalityPruning,
    deadline: Option<Instant>,
) -> Result<Option<SolveOutput>> {
    validate_beta(beta)?;
    let n = data.n();
    let mut qhat = vec![0.0; n + 1];
    let mut tauhat = vec![0usize; n + 1];
    let mut candidates: Vec<usize> = Vec::with_capacity(256);
    let mut scores: Vec<f64> = Vec::with_capacity(256);
    let mut live_counts = Vec::with_capacity(n);
    let mut pruned_at = vec![None; n];
    for t in 1..=n {
        if let Some(limit) = deadline {
            if t % 128 == 0 && Instant::now() >= limit {
                return Ok(None);
            }
        }
        // Score the carried candidates (ascending) and then the fresh
        // candidate t - 1; strict comparisons give ties to the smallest.
        scores.clear();
        let mut best = f64::INFINITY;
        let mut best_tau = t - 1;
        for &c in &candidates {
            let score = qhat[c] + segment_cost_between(data, c, t);
            scores.push(score);
            if score < best {
                best = score;
                best_tau = c;
            }
        }
        let fresh = qhat[t - 1] + segment_cost_between(data, t - 1, t);
        if fresh < best {
            best = fresh;
            best_tau = t - 1;
        }
        qhat[t] = best + beta;
        tauhat[t] = best_tau;
        if pruning == InequalityPruning::On {
            let threshold = qhat[t];
            let mut keep = 0;
            for i in 0..candidates.len() {
                if scores[i] < threshold {
                    candidates[keep] = candidates[i];
                    keep += 1;
                } else {
                    pruned_at[candidates[i]] = Some(t);
                }
            }
            candidates.truncate(keep);
        }
        candidates.push(t - 1);
        live_counts.push(candidates.len());
    }
    let changepoints = backtrack(&tauhat, n);
    let segmentation = Segmentation {
        segment_count: changepoints.len() + 1,
        total_cost: qhat[n],
        changepoints,
    };
    Ok(Some(SolveOutput {
        segmentation,
        state: RunState {
            beta,
            qhat,
            tauhat,
            candidates,
        },
        diagnostics: Diagnostics {
            live_counts,
            pruned_at,
            inter_ops: Vec::new(),
            excl_ops: Vec::new(),
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostModel;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    struct Mix(u64);

    impl Mix {
        fn next_u64(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        }

        fn unit(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
        }

        fn normal(&mut self) -> f64 {
            let u = self.unit().max(1e-12);
            let v = self.unit();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }

    fn step_series() -> TimeSeriesMatrix {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|t| vec![if t < 10 { 0.0 } else { 10.0 }])
            .collect();
        TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap()
    }

    #[test]
    fn step_series_detects_the_jump() {
        let beta = 2.0 * (20.0f64).ln();
        for out in [
            op_solve(&step_series(), beta).unwrap(),
            pelt_solve(&step_series(), beta).unwrap(),
        ] {
            assert_eq!(out.segmentation.changepoints, vec![10]);
            assert_eq!(out.segmentation.segment_count, 2);
            assert_eq!(out.state.tauhat[20], 10);
            assert_close(
                out.segmentation.total_cost,
                out.state.qhat[20],
                0.0,
            );
            // Two exact-fit segments: only the two penalties remain.
            assert_close(out.segmentation.total_cost, 2.0 * beta, 1e-9);
        }
    }

    #[test]
    fn backtrack_unwinds_stored_choices() {
        // tauhat[30] = 20, tauhat[20] = 10, tauhat[10] = 0.
        let mut tauhat = vec![0usize; 31];
        tauhat[30] = 20;
        tauhat[20] = 10;
        tauhat[10] = 0;
        assert_eq!(backtrack(&tauhat, 30), vec![10, 20]);
        assert_eq!(backtrack(&tauhat, 10), Vec::<usize>::new());
        assert_eq!(backtrack(&tauhat, 0), Vec::<usize>::new());
    }

    #[test]
    fn constant_series_never_changes() {
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![3.25, -1.5]).collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        for out in [op_solve(&data, 1.0).unwrap(), pelt_solve(&data, 1.0).unwrap()] {
            assert!(out.segmentation.changepoints.is_empty());
            for t in 1..=40 {
                assert_eq!(out.state.tauhat[t], 0, "tauhat at step {t}");
            }
        }
    }

    #[test]
    fn tie_breaks_choose_the_smallest_position() {
        // Zero penalty on constant data makes every candidate score equal.
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![2.0]).collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let out = op_solve(&data, 0.0).unwrap();
        for t in 1..=5 {
            assert_eq!(out.state.tauhat[t], 0, "tie at step {t} must pick 0");
        }
    }

    #[test]
    fn best_cost_best_tau_matches_the_solver_trace() {
        let mut rng = Mix(0xd9_0001);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|t| vec![rng.normal() + if t >= 15 { 4.0 } else { 0.0 }])
            .collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let out = op_solve(&data, 3.0).unwrap();
        // Replay each step against the final state: with no pruning the
        // candidate list at step t was 0..t-1, a prefix of the final one.
        for t in 1..=30 {
            let replay = RunState {
                beta: 3.0,
                qhat: out.state.qhat.clone(),
                tauhat: out.state.tauhat.clone(),
                candidates: (0..t).collect(),
            };
            let (q, tau) = best_cost_best_tau(&data, &replay, t);
            assert_close(q, out.state.qhat[t], 1e-12 * (1.0 + q.abs()));
            assert_eq!(tau, out.state.tauhat[t]);
        }
    }

    #[test]
    fn pelt_matches_op_on_random_instances() {
        let mut rng = Mix(0xd9_0002);
        for trial in 0..24 {
            let n = 20 + (rng.next_u64() % 41) as usize;
            let p = 1 + (rng.next_u64() % 3) as usize;
            let model = match trial % 3 {
                0 => CostModel::Gaussian,
                1 => CostModel::Poisson,
                _ => CostModel::NegBin { phi: 1.0 },
            };
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|t| {
                    (0..p)
                        .map(|_| match model {
                            CostModel::Gaussian => {
                                rng.normal() + if t % 23 > 11 { 3.0 } else { 0.0 }
                            }
                            _ => (rng.next_u64() % (3 + 4 * ((t % 17 > 8) as u64))) as f64,
                        })
                        .collect()
                })
                .collect();
            let data = TimeSeriesMatrix::from_rows(model, &rows).unwrap();
            let beta = (0.5 + 3.5 * rng.unit()) * 2.0 * p as f64 * (n as f64).ln();
            let a = op_solve(&data, beta).unwrap();
            let b = pelt_solve(&data, beta).unwrap();
            assert_eq!(
                a.segmentation.changepoints, b.segmentation.changepoints,
                "trial {trial} diverged"
            );
            assert_close(
                a.segmentation.total_cost,
                b.segmentation.total_cost,
                1e-9 * (1.0 + a.segmentation.total_cost.abs()),
            );
            for t in 0..n {
                assert!(
                    b.diagnostics.live_counts[t] <= a.diagnostics.live_counts[t],
                    "pruned solver kept more candidates at step {}",
                    t + 1
                );
            }
        }
    }

    #[test]
    fn unpruned_live_counts_grow_linearly() {
        let rows: Vec<Vec<f64>> = (0..15).map(|t| vec![t as f64]).collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let out = op_solve(&data, 2.0).unwrap();
        for t in 1..=15 {
            assert_eq!(out.diagnostics.live_counts[t - 1], t);
        }
        assert!(out.diagnostics.pruned_at.iter().all(Option::is_none));
    }

    #[test]
    fn inequality_pruning_bites_on_strong_changes() {
        let mut rng = Mix(0xd9_0003);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|t| vec![rng.normal() + 8.0 * ((t / 20) % 2) as f64])
            .collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let beta = 2.0 * (200.0f64).ln();
        let out = pelt_solve(&data, beta).unwrap();
        assert!(out.segmentation.segment_count >= 8);
        let final_live = *out.diagnostics.live_counts.last().unwrap();
        assert!(
            final_live < 60,
            "expected strong pruning, kept {final_live} of 200"
        );
        // Removal steps recorded for pruned candidates only.
        let removed = out
            .diagnostics
            .pruned_at
            .iter()
            .filter(|s| s.is_some())
            .count();
        assert_eq!(removed + final_live, 200);
    }

    #[test]
    fn increasing_penalty_never_adds_changes() {
        let mut rng = Mix(0xd9_0004);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|t| vec![rng.normal() + 2.5 * ((t / 30) % 2) as f64])
            .collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let mut last = usize::MAX;
        for mult in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let beta = mult * 2.0 * (120.0f64).ln();
            let count = pelt_solve(&data, beta)
                .unwrap()
                .segmentation
                .changepoints
                .len();
            assert!(
                count <= last,
                "penalty {beta} produced {count} changes after {last}"
            );
            last = count;
        }
    }

    #[test]
    fn invalid_penalties_are_rejected() {
        let data =
            TimeSeriesMatrix::from_rows(CostModel::Gaussian, &[vec![1.0], vec![2.0]]).unwrap();
        assert!(op_solve(&data, -1.0).is_err());
        assert!(op_solve(&data, f64::NAN).is_err());
        assert!(op_solve(&data, f64::INFINITY).is_err());
    }

    #[test]
    fn expired_deadline_reports_censoring() {
        let rows: Vec<Vec<f64>> = (0..5000).map(|t| vec![(t % 7) as f64]).collect();
        let data = TimeSeriesMatrix::from_rows(CostModel::Gaussian, &rows).unwrap();
        let past = Instant::now() - std::time::Duration::from_millis(10);
        assert!(op_solve_capped(&data, 1.0, Some(past)).unwrap().is_none());
    }
}
