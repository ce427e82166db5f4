// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cost models and segment statistics.
//!
//! A model assigns each observation a per-point deviance `omega(theta, y)`;
//! dimensions are independent, so multivariate costs are sums of univariate
//! ones and the optimal segment parameter decomposes per dimension. All
//! segment-level quantities are answered in O(p) from compensated prefix
//! sums built once at load time.

use crate::error::{Error, Result};

/// Clamp applied when a minimizer falls on an open domain boundary.
///
/// The Poisson rate lives in (0, inf) and the negative binomial success
/// parameter in (0, 1); an all-zero segment pushes the minimizer onto the
/// boundary, where the deviance has an infimum but no minimum. Evaluating at
/// this margin keeps costs finite and well ordered.
pub const DOMAIN_MARGIN: f64 = 1e-12;

/// Discrete models accept values at most this far from the nearest integer.
pub const INTEGER_TOL: f64 = 1e-9;

/// Per-point deviance family. Dispersion is a known constant, not estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    /// Squared error `(y - theta)^2`; parameter over the whole real line.
    Gaussian,
    /// Poisson deviance `2(theta - y ln theta + ln y!)`; rate over (0, inf).
    Poisson,
    /// Negative binomial deviance with known dispersion `phi`:
    /// `-2(y ln theta + phi ln(1 - theta) + ln C(y + phi - 1, y))`;
    /// success parameter over (0, 1).
    NegBin { phi: f64 },
}

impl CostModel {
    /// Rejects non-finite or non-positive dispersion.
    pub fn validate(&self) -> Result<()> {
        if let CostModel::NegBin { phi } = self {
            if !phi.is_finite() || *phi <= 0.0 {
                return Err(Error::config(format!(
                    "negative binomial dispersion must be a positive finite number, got {phi}"
                )));
            }
        }
        Ok(())
    }

    /// Closed numeric bounds used in place of the open parameter domain.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            CostModel::Gaussian => (f64::NEG_INFINITY, f64::INFINITY),
            CostModel::Poisson => (DOMAIN_MARGIN, f64::INFINITY),
            CostModel::NegBin { .. } => (DOMAIN_MARGIN, 1.0 - DOMAIN_MARGIN),
        }
    }

    /// True for models whose observations must be nonnegative integers.
    pub fn requires_counts(&self) -> bool {
        !matches!(self, CostModel::Gaussian)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostModel::Gaussian => "gaussian",
            CostModel::Poisson => "poisson",
            CostModel::NegBin { .. } => "negbin",
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::domain(format!(
                "parameter must be finite, got {theta}"
            )));
        }
        let ok = match self {
            CostModel::Gaussian => true,
            CostModel::Poisson => theta > 0.0,
            CostModel::NegBin { .. } => theta > 0.0 && theta < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "parameter {theta} outside the open domain of the {} model",
                self.name()
            )))
        }
    }

    /// Validates a single observation; returns the value to store (counts are
    /// rounded to the nearest integer).
    fn check_value(&self, y: f64) -> std::result::Result<f64, String> {
        if !y.is_finite() {
            return Err(format!("value must be finite, got {y}"));
        }
        if self.requires_counts() {
            let rounded = y.round();
            if (y - rounded).abs() > INTEGER_TOL || rounded < 0.0 {
                return Err(format!(
                    "{} observations must be nonnegative integers (within {INTEGER_TOL:e}), got {y}",
                    self.name()
                ));
            }
            Ok(rounded)
        } else {
            Ok(y)
        }
    }

    /// Per-point constant folded into the auxiliary prefix sum: `y^2` for
    /// Gaussian, `ln y!` for Poisson, `ln C(y + phi - 1, y)` for the negative
    /// binomial. `y` must already be validated.
    fn aux_term(&self, y: f64) -> f64 {
        match self {
            CostModel::Gaussian => y * y,
            CostModel::Poisson => libm::lgamma(y + 1.0),
            CostModel::NegBin { phi } => {
                libm::lgamma(y + phi) - libm::lgamma(*phi) - libm::lgamma(y + 1.0)
            }
        }
    }
}

/// Deviance of a single observation in a single dimension.
pub fn atomic_cost(model: &CostModel, theta: f64, y: f64) -> Result<f64> {
    model.validate()?;
    model.check_theta(theta)?;
    let y = model
        .check_value(y)
        .map_err(Error::Domain)?;
    Ok(match model {
        CostModel::Gaussian => {
            let d = y - theta;
            d * d
        }
        CostModel::Poisson => 2.0 * (theta - y * theta.ln() + libm::lgamma(y + 1.0)),
        CostModel::NegBin { phi } => {
            let lbinom = libm::lgamma(y + phi) - libm::lgamma(*phi) - libm::lgamma(y + 1.0);
            -2.0 * (y * theta.ln() + phi * (-theta).ln_1p() + lbinom)
        }
    })
}

/// Deviance of one multivariate observation: sum of `atomic_cost` over
/// dimensions. `theta` and `y` must have equal length.
pub fn point_cost(model: &CostModel, theta: &[f64], y: &[f64]) -> Result<f64> {
    if theta.len() != y.len() {
        return Err(Error::input(format!(
            "parameter has {} dimensions but observation has {}",
            theta.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (&t, &v) in theta.iter().zip(y) {
        total += atomic_cost(model, t, v)?;
    }
    Ok(total)
}

#[inline]
fn kahan_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let y = v - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// A validated n-by-p series with the prefix statistics required by its model.
///
/// Prefix rows are stored time-major: row `t` holds the sums of rows `0..t`,
/// so any segment statistic is a difference of two rows. Sums are compensated
/// (Kahan) so long-series prefix differences stay accurate.
#[derive(Debug, Clone)]
pub struct TimeSeriesMatrix {
    model: CostModel,
    n: usize,
    p: usize,
    values: Vec<f64>,
    prefix_sum: Vec<f64>,
    prefix_aux: Vec<f64>,
}

impl TimeSeriesMatrix {
    /// Builds a matrix from row-major observations, validating every value
    /// against the model domain. Row and column indices in errors are 1-based.
    pub fn from_rows(model: CostModel, rows: &[Vec<f64>]) -> Result<Self> {
        model.validate()?;
        if rows.is_empty() {
            return Err(Error::input("the series has no rows"));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::input("the series has no columns"));
        }
        let mut values = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::input(format!(
                    "ragged input: row {} has {} fields, expected {}",
                    r + 1,
                    row.len(),
                    p
                )));
            }
            for (c, &y) in row.iter().enumerate() {
                if !y.is_finite() {
                    return Err(Error::input(format!(
                        "non-finite value {} at row {}, column {}",
                        y,
                        r + 1,
                        c + 1
                    )));
                }
                let stored = model
                    .check_value(y)
                    .map_err(|m| Error::domain_at(r + 1, c + 1, m))?;
                values.push(stored);
            }
        }
        Ok(Self::from_validated(model, rows.len(), p, values))
    }

    /// Builds a matrix from an already validated row-major buffer. Used by the
    /// simulator, whose draws are in-domain by construction.
    pub(crate) fn from_validated(model: CostModel, n: usize, p: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * p);
        let mut prefix_sum = vec![0.0; (n + 1) * p];
        let mut prefix_aux = vec![0.0; (n + 1) * p];
        let mut sum = vec![0.0; p];
        let mut sum_c = vec![0.0; p];
        let mut aux = vec![0.0; p];
        let mut aux_c = vec![0.0; p];
        for t in 0..n {
            for k in 0..p {
                let y = values[t * p + k];
                kahan_add(&mut sum[k], &mut sum_c[k], y);
                kahan_add(&mut aux[k], &mut aux_c[k], model.aux_term(y));
                prefix_sum[(t + 1) * p + k] = sum[k];
                prefix_aux[(t + 1) * p + k] = aux[k];
            }
        }
        TimeSeriesMatrix {
            model,
            n,
            p,
            values,
            prefix_sum,
            prefix_aux,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    /// Observation at time `t` (0-based), dimension `k`.
    pub fn value(&self, t: usize, k: usize) -> f64 {
        assert!(t < self.n && k < self.p, "index ({t}, {k}) out of bounds");
        self.values[t * self.p + k]
    }

    /// Row `t` as a slice of length p.
    pub fn row(&self, t: usize) -> &[f64] {
        assert!(t < self.n, "row {t} out of bounds");
        &self.values[t * self.p..(t + 1) * self.p]
    }

    /// Sufficient statistics for rows `start..end` (half-open, 0-based).
    pub fn stats(&self, start: usize, end: usize) -> SegmentStats<'_> {
        assert!(
            start < end && end <= self.n,
            "segment {start}..{end} out of bounds for n = {}",
            self.n
        );
        SegmentStats {
            mat: self,
            start,
            end,
        }
    }
}

/// Borrowed view answering per-dimension segment queries in O(1) each.
#[derive(Clone, Copy)]
pub struct SegmentStats<'a> {
    mat: &'a TimeSeriesMatrix,
    start: usize,
    end: usize,
}

impl<'a> SegmentStats<'a> {
    pub fn model(&self) -> &'a CostModel {
        &self.mat.model
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Number of observations in the segment.
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dims(&self) -> usize {
        self.mat.p
    }

    /// Sum of values in dimension `k`.
    #[inline]
    pub fn sum(&self, k: usize) -> f64 {
        let p = self.mat.p;
        self.mat.prefix_sum[self.end * p + k] - self.mat.prefix_sum[self.start * p + k]
    }

    /// Sum of the model's per-point auxiliary terms in dimension `k`.
    #[inline]
    pub fn aux(&self, k: usize) -> f64 {
        let p = self.mat.p;
        self.mat.prefix_aux[self.end * p + k] - self.mat.prefix_aux[self.start * p + k]
    }

    #[inline]
    pub fn mean(&self, k: usize) -> f64 {
        self.sum(k) / self.len() as f64
    }

    /// Residual sum of squares around the mean in dimension `k`, clamped at
    /// zero against cancellation. Gaussian only by construction of `aux`.
    #[inline]
    pub fn rss(&self, k: usize) -> f64 {
        let s = self.sum(k);
        (self.aux(k) - s * s / self.len() as f64).max(0.0)
    }

    /// Minimizer of the per-dimension segment cost, clamped into the numeric
    /// domain: the mean for Gaussian and Poisson, `S / (S + m phi)` for the
    /// negative binomial.
    #[inline]
    pub fn dim_argmin(&self, k: usize) -> f64 {
        let m = self.len() as f64;
        match self.mat.model {
            CostModel::Gaussian => self.mean(k),
            CostModel::Poisson => self.mean(k).max(DOMAIN_MARGIN),
            CostModel::NegBin { phi } => {
                let s = self.sum(k);
                (s / (s + m * phi)).clamp(DOMAIN_MARGIN, 1.0 - DOMAIN_MARGIN)
            }
        }
    }

    /// Per-dimension segment cost `s^k(theta)`, the sum of per-point
    /// deviances in dimension `k` at a common parameter value.
    #[inline]
    pub fn dim_cost_at(&self, k: usize, theta: f64) -> f64 {
        let m = self.len() as f64;
        match self.mat.model {
            CostModel::Gaussian => {
                let d = theta - self.mean(k);
                m * d * d + self.rss(k)
            }
            CostModel::Poisson => 2.0 * (m * theta - self.sum(k) * theta.ln() + self.aux(k)),
            CostModel::NegBin { phi } => {
                -2.0 * (self.sum(k) * theta.ln() + m * phi * (-theta).ln_1p() + self.aux(k))
            }
        }
    }

    /// Minimum of the per-dimension segment cost.
    #[inline]
    pub fn dim_min_cost(&self, k: usize) -> f64 {
        match self.mat.model {
            CostModel::Gaussian => self.rss(k),
            _ => self.dim_cost_at(k, self.dim_argmin(k)),
        }
    }

    /// Optimal common parameter for the segment, one entry per dimension.
    pub fn argmin(&self) -> Vec<f64> {
        (0..self.dims()).map(|k| self.dim_argmin(k)).collect()
    }

    /// Optimal segment cost: sum of `dim_min_cost` over dimensions.
    pub fn cost(&self) -> f64 {
        (0..self.dims()).map(|k| self.dim_min_cost(k)).sum()
    }
}

/// Optimal common parameter for a segment, one entry per dimension.
pub fn segment_argmin(stats: &SegmentStats<'_>) -> Vec<f64> {
    stats.argmin()
}

/// Optimal cost of fitting one parameter vector to a segment.
pub fn segment_cost(stats: &SegmentStats<'_>) -> f64 {
    stats.cost()
}

/// Default per-segment penalty `2 p sigma^2 ln n`.
///
/// Requires `n >= 2`: the log vanishes at n = 1 and the penalty would be
/// degenerate.
pub fn default_penalty(n: usize, p: usize, sigma: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::config(format!(
            "default penalty needs at least 2 observations, got {n}"
        )));
    }
    if p == 0 {
        return Err(Error::config("default penalty needs at least 1 dimension"));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::config(format!(
            "noise scale must be a positive finite number, got {sigma}"
        )));
    }
    Ok(2.0 * p as f64 * sigma * sigma * (n as f64).ln())
}

/// Robust noise-scale estimate: per dimension, the median absolute lag-1
/// difference divided by `0.6745 * sqrt(2)`, averaged over dimensions.
///
/// Errors when the pooled scale is zero (constant series) since a zero scale
/// would zero out the default penalty.
pub fn estimate_sigma(data: &TimeSeriesMatrix) -> Result<f64> {
    if data.n() < 2 {
        return Err(Error::input(
            "noise-scale estimation needs at least 2 observations",
        ));
    }
    let mut pooled = 0.0;
    let mut diffs = Vec::with_capacity(data.n() - 1);
    for k in 0..data.p() {
        diffs.clear();
        for t in 1..data.n() {
            diffs.push((data.value(t, k) - data.value(t - 1, k)).abs());
        }
        diffs.sort_by(|a, b| a.partial_cmp(b).expect("absolute differences are finite"));
        let mid = diffs.len() / 2;
        let median = if diffs.len() % 2 == 1 {
            diffs[mid]
        } else {
            0.5 * (diffs[mid - 1] + diffs[mid])
        };
        pooled += median / (0.6745 * std::f64::consts::SQRT_2);
    }
    let sigma = pooled / data.p() as f64;
    if sigma <= 0.0 {
        return Err(Error::domain(
            "residual scale is zero (constant series); pass an explicit scale or penalty",
        ));
    }
    Ok(sigma)
}
