// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic piecewise-constant instances for experiments and benchmarks.
//!
//! Segments are equally spaced and the per-segment parameter alternates
//! between a base level and a level `amplitude` away, starting at the base.
//! Only the leading `affected_dims` dimensions carry the alternation; the
//! rest stay at the base level throughout, which isolates how pruning decays
//! when most dimensions are change-free.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal, Poisson};

use crate::cost::{CostModel, TimeSeriesMatrix};
use crate::error::{Error, Result};

/// Specification of one synthetic instance.
///
/// All three models share one mean story: odd-numbered segments (first,
/// third, ...) sit at mean 1 for the count models and 0 for Gaussian, and
/// even-numbered segments shift the mean by `amplitude`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub segments: usize,
    pub model: CostModel,
    /// Mean shift between consecutive segments.
    pub amplitude: f64,
    /// Leading dimensions that carry the changes.
    pub affected_dims: usize,
    pub seed: u64,
}

impl SimSpec {
    /// Spec with the default contrast (amplitude 1) and changes in every
    /// dimension.
    pub fn new(n: usize, p: usize, segments: usize, model: CostModel, seed: u64) -> Self {
        SimSpec {
            n,
            p,
            segments,
            model,
            amplitude: 1.0,
            affected_dims: p,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::config("simulation needs n >= 1 and p >= 1"));
        }
        if self.segments == 0 {
            return Err(Error::config("simulation needs at least one segment"));
        }
        if self.segments > self.n {
            return Err(Error::config(format!(
                "cannot fit {} segments into {} observations",
                self.segments, self.n
            )));
        }
        if self.affected_dims > self.p {
            return Err(Error::config(format!(
                "affected_dims {} exceeds dimension {}",
                self.affected_dims, self.p
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config("amplitude must be finite"));
        }
        self.model.validate()
    }
}

/// Equally spaced interior boundaries `round(k n / segments)` for
/// `k = 1..segments`. Strictly increasing whenever `segments <= n`.
pub fn true_changepoints(n: usize, segments: usize) -> Vec<usize> {
    (1..segments)
        .map(|k| ((k * n) as f64 / segments as f64).round() as usize)
        .collect()
}

/// Draws the instance described by `spec`; returns the data matrix and the
/// ground-truth boundaries. One ChaCha stream per spec, consumed row-major,
/// so a fixed seed reproduces the matrix byte for byte.
pub fn generate(spec: &SimSpec) -> Result<(TimeSeriesMatrix, Vec<usize>)> {
    spec.validate()?;
    let truth = true_changepoints(spec.n, spec.segments);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(spec.n);
    let mut seg = 0usize;
    for t in 0..spec.n {
        if seg < truth.len() && t >= truth[seg] {
            seg += 1;
        }
        let mut row = Vec::with_capacity(spec.p);
        for k in 0..spec.p {
            let shifted = k < spec.affected_dims && seg % 2 == 1;
            row.push(draw(&spec.model, spec.amplitude, shifted, &mut rng)?);
        }
        rows.push(row);
    }
    let data = TimeSeriesMatrix::from_rows(spec.model, &rows)?;
    Ok((data, truth))
}

/// One observation at the base level or at the level shifted by the
/// amplitude.
///
/// Gaussian: unit variance around mean 0 or `amplitude`. Poisson: rate 1 or
/// `1 + amplitude`. Negative binomial: success parameter chosen so the mean
/// is 1 or `1 + amplitude` at the model's dispersion, sampled through the
/// gamma-Poisson mixture.
fn draw(model: &CostModel, amplitude: f64, shifted: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    match model {
        CostModel::Gaussian => {
            let mean = if shifted { amplitude } else { 0.0 };
            let normal = Normal::new(mean, 1.0)
                .map_err(|e| Error::config(format!("gaussian sampler: {e}")))?;
            Ok(normal.sample(rng))
        }
        CostModel::Poisson => {
            let rate = if shifted { 1.0 + amplitude } else { 1.0 };
            if rate <= 0.0 {
                return Err(Error::config(format!("nonpositive poisson rate {rate}")));
            }
            let poisson =
                Poisson::new(rate).map_err(|e| Error::config(format!("poisson sampler: {e}")))?;
            Ok(poisson.sample(rng))
        }
        CostModel::NegBin { phi } => {
            let mean = if shifted { 1.0 + amplitude } else { 1.0 };
            if mean <= 0.0 {
                return Err(Error::config(format!("nonpositive negbin mean {mean}")));
            }
            // Mean phi theta / (1 - theta) = target, so scale = mean / phi.
            let gamma = Gamma::new(*phi, mean / phi)
                .map_err(|e| Error::config(format!("negbin mixing sampler: {e}")))?;
            let lambda: f64 = gamma.sample(rng);
            let poisson = Poisson::new(lambda.max(1e-12))
                .map_err(|e| Error::config(format!("negbin sampler: {e}")))?;
            Ok(poisson.sample(rng))
        }
    }
}
