// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multivariate penalized change-point detection with geometric candidate
//! pruning.
//!
//! The crate fits piecewise-constant models to independent multivariate time
//! series by penalized cost minimization. Solvers share one dynamic-program
//! core and differ only in how they discard change-point candidates:
//! no pruning, inequality-based pruning, or geometric pruning that maintains
//! a ball or hyperrectangle per candidate.

#![forbid(unsafe_code)]

pub mod bench;
pub mod cost;
pub mod dp;
pub mod error;
pub mod geom;
pub mod geometry;
pub mod io;
pub mod sim;

pub use cost::{
    atomic_cost, default_penalty, estimate_sigma, point_cost, segment_argmin, segment_cost,
    CostModel, SegmentStats, TimeSeriesMatrix,
};
pub use dp::{
    backtrack, best_cost_best_tau, op_solve, op_solve_capped, pelt_solve, pelt_solve_capped,
    Diagnostics, RunState, Segmentation, SolveOutput,
};
pub use error::{Error, Result};
pub use geom::{
    geomfpop_solve, geomfpop_solve_capped, select_future, select_past, update_testing_set,
    Candidate, FutureSelect, OpCounts, PastSelect, PruningConfig, PruningKind, TestingSet,
};
pub use bench::{
    candidate_trace_experiment, runtime_grid, segments_sweep, BenchRecord, SolverId, TraceRow,
};
pub use geometry::{
    ball_disjoint, ball_included, char_points, rect_excl, rect_inter, sset_excl, sset_inter, Ball,
    BallSet, CharacteristicPoints, HyperRect, SublevelSet,
};
pub use sim::{generate, true_changepoints, SimSpec};
