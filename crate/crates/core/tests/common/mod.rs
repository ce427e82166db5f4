// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared helpers for integration tests: an exhaustive segmentation oracle
//! and deterministic random-instance builders.

use geomseg_core::{CostModel, SimSpec, TimeSeriesMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exhaustive minimizer of the penalized cost over all `2^(n-1)`
/// segmentations: every subset of interior boundaries, each segment paying
/// the penalty. Returns the best boundary list and its total cost.
pub fn brute_force_solve(data: &TimeSeriesMatrix, beta: f64) -> (Vec<usize>, f64) {
    let n = data.n();
    assert!((1..=20).contains(&n), "exhaustive search needs 1 <= n <= 20");
    let mut best_cost = f64::INFINITY;
    let mut best_mask: u64 = 0;
    for mask in 0u64..(1 << (n - 1)) {
        let mut cost = 0.0;
        let mut start = 0usize;
        for boundary in 1..n {
            if mask >> (boundary - 1) & 1 == 1 {
                cost += data.stats(start, boundary).cost() + beta;
                start = boundary;
            }
        }
        cost += data.stats(start, n).cost() + beta;
        if cost < best_cost {
            best_cost = cost;
            best_mask = mask;
        }
    }
    let changepoints = (1..n).filter(|b| best_mask >> (b - 1) & 1 == 1).collect();
    (changepoints, best_cost)
}

/// A random piecewise-constant instance drawn from shared test streams:
/// random segment count and amplitude, all dimensions affected.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    model: CostModel,
) -> TimeSeriesMatrix {
    let max_segments = n.min(5);
    let mut spec = SimSpec::new(n, p, rng.random_range(1..=max_segments), model, rng.random());
    spec.amplitude = rng.random_range(0.5..3.0);
    let (data, _) = geomseg_core::generate(&spec).unwrap();
    data
}

/// One of the three models, the negative binomial at unit dispersion.
pub fn pick_model(rng: &mut ChaCha8Rng) -> CostModel {
    match rng.random_range(0..3u8) {
        0 => CostModel::Gaussian,
        1 => CostModel::Poisson,
        _ => CostModel::NegBin { phi: 1.0 },
    }
}
