// SPDX-License-Identifier: MIT OR Apache-2.0

//! Geometry of candidate-comparison regions.
//!
//! Comparing the costs of two change-point candidates over a shared data
//! suffix reduces to a sub-level set `{theta : sum_k s^k(theta^k) <= delta}`
//! of a separable convex function. These sets are balls under the Gaussian
//! model and ball-like convex bodies otherwise. Pruning never needs the sets
//! exactly: it needs fast conservative intersection and exclusion tests,
//! provided here for ball and axis-aligned-box approximations.

use crate::cost::{CostModel, SegmentStats, TimeSeriesMatrix};
use crate::error::{Error, Result};

/// Relative residual tolerance for one-dimensional root solving:
/// iteration stops once `|s^k(root) - level| <= ROOT_TOL * (1 + |level|)`.
pub const ROOT_TOL: f64 = 1e-10;

/// Sub-level set of a segment's summed deviance: all parameters fitting rows
/// `start..end` at total cost at most `delta`. `start == end` marks the whole
/// parameter space (no constraint).
#[derive(Clone, Copy)]
pub struct SublevelSet<'a> {
    data: &'a TimeSeriesMatrix,
    start: usize,
    end: usize,
    delta: f64,
}

impl<'a> SublevelSet<'a> {
    /// Builds the set over rows `start..end` (half-open) with threshold
    /// `delta`. Equal endpoints give the full-space marker.
    pub fn new(data: &'a TimeSeriesMatrix, start: usize, end: usize, delta: f64) -> Self {
        assert!(
            start <= end && end <= data.n(),
            "segment {start}..{end} out of bounds for n = {}",
            data.n()
        );
        SublevelSet {
            data,
            start,
            end,
            delta,
        }
    }

    /// Builds the comparison set between candidates `a < b` from the solved
    /// optimal-cost prefix: rows `a..b` with threshold `qhat[b] - qhat[a]`.
    /// Both prefix entries must already be computed.
    pub fn from_qhat(
        data: &'a TimeSeriesMatrix,
        qhat: &[f64],
        a: usize,
        b: usize,
    ) -> Result<Self> {
        if a > b {
            return Err(Error::config(format!(
                "comparison set endpoints out of order: {a} > {b}"
            )));
        }
        if b >= qhat.len() {
            return Err(Error::config(format!(
                "comparison set endpoint {b} exceeds the solved prefix (len {})",
                qhat.len()
            )));
        }
        Ok(SublevelSet::new(data, a, b, qhat[b] - qhat[a]))
    }

    pub fn data(&self) -> &'a TimeSeriesMatrix {
        self.data
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_full_space(&self) -> bool {
        self.start == self.end
    }

    pub fn dims(&self) -> usize {
        self.data.p()
    }

    fn stats(&self) -> SegmentStats<'a> {
        debug_assert!(!self.is_full_space());
        self.data.stats(self.start, self.end)
    }

    /// Signed membership value `sum_k s^k(theta^k) - delta`; nonpositive
    /// inside the set. The full-space marker is a member everywhere.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dims(), "parameter dimension mismatch");
        if self.is_full_space() {
            return f64::NEG_INFINITY;
        }
        let stats = self.stats();
        let mut total = -self.delta;
        for (k, &t) in theta.iter().enumerate() {
            total += stats.dim_cost_at(k, t);
        }
        total
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.eval(theta) <= 0.0
    }

    /// True when the set is empty: the summed deviance is separable, so the
    /// global minimum is the sum of per-dimension minima.
    pub fn is_empty_region(&self) -> bool {
        if self.is_full_space() {
            return false;
        }
        let stats = self.stats();
        let min: f64 = (0..self.dims()).map(|k| stats.dim_min_cost(k)).sum();
        min > self.delta
    }

    /// The interval `{theta^k : s^k(theta^k) <= level}` clamped to the
    /// model's numeric domain, or `None` when it is empty. Gaussian roots are
    /// closed form; other models bisect each flank of the minimizer to the
    /// `ROOT_TOL` residual, doubling the bracket step outward. A domain end
    /// reached without a sign change is itself the interval end.
    pub fn dim_roots(&self, k: usize, level: f64) -> Option<(f64, f64)> {
        assert!(!self.is_full_space(), "roots of the full-space marker");
        let stats = self.stats();
        let m = stats.len() as f64;
        if let CostModel::Gaussian = self.data.model() {
            let min = stats.rss(k);
            if level < min {
                return None;
            }
            let half = ((level - min) / m).sqrt();
            let c = stats.mean(k);
            return Some((c - half, c + half));
        }
        let (dom_lo, dom_hi) = self.data.model().domain();
        let c = stats.dim_argmin(k);
        let g = |theta: f64| stats.dim_cost_at(k, theta) - level;
        if g(c) > 0.0 {
            return None;
        }
        let tol = ROOT_TOL * (1.0 + level.abs());
        let left = if g(dom_lo) <= 0.0 {
            dom_lo
        } else {
            bisect_root(&g, c, dom_lo, tol)
        };
        let right = if dom_hi.is_finite() {
            if g(dom_hi) <= 0.0 {
                dom_hi
            } else {
                bisect_root(&g, c, dom_hi, tol)
            }
        } else {
            // Expand the bracket away from the minimizer until infeasible;
            // the deviance grows without bound, so this terminates.
            let mut step = c.abs().max(1.0);
            let mut outer = c + step;
            let mut guard = 0;
            while g(outer) <= 0.0 && guard < 600 {
                step *= 2.0;
                outer = c + step;
                guard += 1;
            }
            bisect_root(&g, c, outer, tol)
        };
        Some((left, right))
    }
}

impl std::fmt::Debug for SublevelSet<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_full_space() {
            write!(f, "SublevelSet(full space)")
        } else {
            write!(
                f,
                "SublevelSet(rows {}..{}, delta {})",
                self.start, self.end, self.delta
            )
        }
    }
}

/// Bisects between a feasible point (`g <= 0`) and an infeasible one
/// (`g > 0`), returning a point within the residual tolerance or, failing
/// that, the tightest feasible endpoint found.
fn bisect_root(g: &impl Fn(f64) -> f64, mut feasible: f64, mut infeasible: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (feasible + infeasible);
        if mid == feasible || mid == infeasible {
            break;
        }
        let v = g(mid);
        if v.abs() <= tol {
            return mid;
        }
        if v <= 0.0 {
            feasible = mid;
        } else {
            infeasible = mid;
        }
    }
    feasible
}

/// Euclidean ball given by center and squared radius. A negative squared
/// radius denotes the empty set; it arises naturally when a comparison set's
/// threshold is below the best achievable cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius_sq: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius_sq: f64) -> Self {
        Ball { center, radius_sq }
    }

    /// Gaussian specialization of a sub-level set: center at the segment
    /// means, squared radius `(delta - rss) / m`. Errors for other models,
    /// whose sets are not balls, and for the full-space marker.
    pub fn from_set(set: &SublevelSet<'_>) -> Result<Ball> {
        if !matches!(set.data().model(), CostModel::Gaussian) {
            return Err(Error::unsupported(format!(
                "ball representation requires the gaussian model, got {}",
                set.data().model().name()
            )));
        }
        if set.is_full_space() {
            return Err(Error::config(
                "the full-space marker has no ball representation",
            ));
        }
        let stats = set.stats();
        let m = stats.len() as f64;
        let center: Vec<f64> = (0..set.dims()).map(|k| stats.mean(k)).collect();
        let rss: f64 = (0..set.dims()).map(|k| stats.rss(k)).sum();
        Ok(Ball {
            center,
            radius_sq: (set.delta() - rss) / m,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.radius_sq < 0.0
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius_sq.max(0.0).sqrt()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        !self.is_empty() && dist_sq(&self.center, point) <= self.radius_sq
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// True when the balls provably share no point: center distance strictly
/// greater than the radius sum. Empty operands are disjoint from everything.
pub fn ball_disjoint(a: &Ball, b: &Ball) -> bool {
    if a.is_empty() || b.is_empty() {
        return true;
    }
    let d_sq = dist_sq(&a.center, &b.center);
    d_sq > a.radius_sq + b.radius_sq + 2.0 * (a.radius_sq * b.radius_sq).sqrt()
}

/// True when one ball contains the other: center distance at most the radius
/// difference. The caller disambiguates the direction by comparing radii. An
/// empty operand is contained in anything.
pub fn ball_included(a: &Ball, b: &Ball) -> bool {
    if a.is_empty() || b.is_empty() {
        return a.is_empty();
    }
    let d_sq = dist_sq(&a.center, &b.center);
    // d <= |Ra - Rb|  <=>  d^2 <= Ra^2 + Rb^2 - 2 Ra Rb.
    d_sq <= a.radius_sq + b.radius_sq - 2.0 * (a.radius_sq * b.radius_sq).sqrt()
}

/// Ball-backed testing set: the whole space before any constraint lands, a
/// ball while alive, or empty once pruning proves it vacant.
#[derive(Debug, Clone, PartialEq)]
pub enum BallSet {
    Full,
    Alive(Ball),
    Empty,
}

impl BallSet {
    /// Normalizes an empty ball into the explicit empty state.
    pub fn from_ball(ball: Ball) -> Self {
        if ball.is_empty() {
            BallSet::Empty
        } else {
            BallSet::Alive(ball)
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, BallSet::Empty)
    }
}

/// Ball-algebra intersection: the result is empty when the operands are
/// provably disjoint and the left operand unchanged otherwise. A full-space
/// left operand adopts `s`, which seeds a fresh testing set with its first
/// real constraint.
pub fn sset_inter(test: &BallSet, s: &BallSet) -> BallSet {
    match (test, s) {
        (BallSet::Empty, _) | (_, BallSet::Empty) => BallSet::Empty,
        (t, BallSet::Full) => t.clone(),
        (BallSet::Full, other) => other.clone(),
        (BallSet::Alive(t), BallSet::Alive(b)) => {
            if ball_disjoint(t, b) {
                BallSet::Empty
            } else {
                test.clone()
            }
        }
    }
}

/// Ball-algebra exclusion: the result is empty when `test` provably lies
/// inside `s` (nothing of it survives removal) and `test` unchanged
/// otherwise.
pub fn sset_excl(test: &BallSet, s: &BallSet) -> BallSet {
    match (test, s) {
        (BallSet::Empty, _) => BallSet::Empty,
        (t, BallSet::Empty) => t.clone(),
        (_, BallSet::Full) => BallSet::Empty,
        (BallSet::Full, BallSet::Alive(_)) => BallSet::Full,
        (BallSet::Alive(t), BallSet::Alive(b)) => {
            if t.radius_sq <= b.radius_sq && ball_included(t, b) {
                BallSet::Empty
            } else {
                test.clone()
            }
        }
    }
}

/// Axis-aligned box with per-dimension closed bounds; infinities mark
/// unbounded sides. Bounds never exceed the model's parameter domain when
/// built through `full_domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    lo: Vec<f64>,
    hi: Vec<f64>,
    empty: bool,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::config("box bound vectors differ in length"));
        }
        for k in 0..lo.len() {
            if lo[k].is_nan() || hi[k].is_nan() || lo[k] > hi[k] {
                return Err(Error::config(format!(
                    "invalid box interval [{}, {}] in dimension {k}",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(HyperRect {
            lo,
            hi,
            empty: false,
        })
    }

    /// The model's whole parameter domain in `p` dimensions.
    pub fn full_domain(model: &CostModel, p: usize) -> Self {
        let (lo, hi) = model.domain();
        HyperRect {
            lo: vec![lo; p],
            hi: vec![hi; p],
            empty: false,
        }
    }

    pub fn empty(p: usize) -> Self {
        HyperRect {
            lo: vec![0.0; p],
            hi: vec![0.0; p],
            empty: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, k: usize) -> f64 {
        self.lo[k]
    }

    pub fn hi(&self, k: usize) -> f64 {
        self.hi[k]
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        !self.empty
            && point
                .iter()
                .enumerate()
                .all(|(k, &x)| self.lo[k] <= x && x <= self.hi[k])
    }

    /// True when `self` is contained in `other` dimension by dimension.
    pub fn subset_of(&self, other: &HyperRect) -> bool {
        self.empty
            || (!other.empty
                && (0..self.dims()).all(|k| other.lo[k] <= self.lo[k] && self.hi[k] <= other.hi[k]))
    }
}

/// The three per-dimension reference points of a sub-level set against a box:
/// the unconstrained minimizer of each `s^k`, its clamp into the box
/// (the box point minimizing the summed deviance), and the box end
/// maximizing each `s^k` (ties to the lower end; infinite ends win with an
/// infinite coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicPoints {
    pub minimal: Vec<f64>,
    pub closest: Vec<f64>,
    pub farthest: Vec<f64>,
}

/// Computes the characteristic points of `s` against `r`. `r` must be
/// nonempty and `s` a real set (not the full-space marker).
pub fn char_points(s: &SublevelSet<'_>, r: &HyperRect) -> CharacteristicPoints {
    assert!(!r.is_empty(), "characteristic points of an empty box");
    assert!(!s.is_full_space(), "characteristic points of the full space");
    let stats = s.data().stats(s.start(), s.end());
    let p = s.dims();
    let mut minimal = Vec::with_capacity(p);
    let mut closest = Vec::with_capacity(p);
    let mut farthest = Vec::with_capacity(p);
    for k in 0..p {
        let c = stats.dim_argmin(k);
        minimal.push(c);
        closest.push(c.clamp(r.lo(k), r.hi(k)));
        let vlo = if r.lo(k).is_finite() {
            stats.dim_cost_at(k, r.lo(k))
        } else {
            f64::INFINITY
        };
        let vhi = if r.hi(k).is_finite() {
            stats.dim_cost_at(k, r.hi(k))
        } else {
            f64::INFINITY
        };
        farthest.push(if vhi > vlo { r.hi(k) } else { r.lo(k) });
    }
    CharacteristicPoints {
        minimal,
        closest,
        farthest,
    }
}

/// Dimensions served by the stack scratch buffer inside the box operators;
/// higher-dimensional calls fall back to a heap buffer.
const STACK_DIMS: usize = 32;

/// How a Gaussian set relates to a box, decided from the set's exact ball
/// form without touching the root machinery.
enum Screen {
    Covered,
    Disjoint,
    Partial,
}

/// Exact ball prescreen for Gaussian sets: the set is the ball of squared
/// radius `(delta - rss) / m` around the segment means, so comparing the
/// box's nearest and farthest squared distances against it settles the
/// all-or-nothing cases cheaply. Infinite box sides only rule out coverage.
fn gaussian_screen(r: &HyperRect, s: &SublevelSet<'_>) -> Screen {
    let stats = s.data().stats(s.start(), s.end());
    // One reciprocal instead of per-dimension divisions; the ulp-level drift
    // against the exact path only shifts which side of a tangency a
    // borderline case lands on, and both answers are sound supersets.
    let inv_m = 1.0 / stats.len() as f64;
    let p = s.dims();
    let mut rss = 0.0;
    let mut near = 0.0;
    let mut far = 0.0;
    for k in 0..p {
        let sum = stats.sum(k);
        let c = sum * inv_m;
        rss += (stats.aux(k) - sum * sum * inv_m).max(0.0);
        let (lo, hi) = (r.lo[k], r.hi[k]);
        let d_near = if c < lo {
            lo - c
        } else if c > hi {
            c - hi
        } else {
            0.0
        };
        near += d_near * d_near;
        if lo.is_infinite() || hi.is_infinite() {
            far = f64::INFINITY;
        } else {
            let d_far = (c - lo).max(hi - c);
            far += d_far * d_far;
        }
    }
    let radius_sq = (s.delta() - rss) * inv_m;
    if near > radius_sq {
        Screen::Disjoint
    } else if far <= radius_sq {
        Screen::Covered
    } else {
        Screen::Partial
    }
}

impl HyperRect {
    /// Normalizes to the canonical empty box (zero bounds, empty flag).
    fn make_empty(&mut self) {
        self.lo.fill(0.0);
        self.hi.fill(0.0);
        self.empty = true;
    }
}

/// Tightens `r` against `s`: in each dimension the new bounds are the
/// sub-level interval of `s^k` at the level left over after spending the
/// closest point's deviance in the other dimensions, clipped to the old
/// bounds. Returns the empty box when any dimension empties; returns `r`
/// unchanged for the full-space marker.
///
/// The output contains the true intersection of `r` with the set: the
/// closest point minimizes the summed deviance over the box, so any member
/// of the intersection spends at least that much in the other dimensions.
pub fn rect_inter(r: &HyperRect, s: &SublevelSet<'_>) -> HyperRect {
    let mut out = r.clone();
    rect_inter_mut(&mut out, s);
    out
}

/// In-place, allocation-free form of [`rect_inter`].
pub(crate) fn rect_inter_mut(r: &mut HyperRect, s: &SublevelSet<'_>) {
    if r.is_empty() || s.is_full_space() {
        return;
    }
    let p = s.dims();
    debug_assert_eq!(r.dims(), p);
    let stats = s.data().stats(s.start(), s.end());
    if matches!(s.data().model(), CostModel::Gaussian) {
        match gaussian_screen(r, s) {
            Screen::Covered => return,
            Screen::Disjoint => {
                r.make_empty();
                return;
            }
            Screen::Partial => {}
        }
    }
    let mut stack = [0.0f64; STACK_DIMS];
    let mut heap;
    let vals: &mut [f64] = if p <= STACK_DIMS {
        &mut stack[..p]
    } else {
        heap = vec![0.0; p];
        &mut heap
    };
    let mut total = 0.0;
    for (k, val) in vals.iter_mut().enumerate() {
        let c = stats.dim_argmin(k).clamp(r.lo[k], r.hi[k]);
        *val = stats.dim_cost_at(k, c);
        total += *val;
    }
    for (k, &val) in vals.iter().enumerate() {
        let level = s.delta() - (total - val);
        let Some((a, b)) = s.dim_roots(k, level) else {
            r.make_empty();
            return;
        };
        let new_lo = a.max(r.lo[k]);
        let new_hi = b.min(r.hi[k]);
        if new_lo > new_hi {
            r.make_empty();
            return;
        }
        r.lo[k] = new_lo;
        r.hi[k] = new_hi;
    }
}

/// Carves `s` out of `r` where that stays a box: in each dimension the
/// sub-level interval of `s^k` at the level left over after spending the
/// farthest point's deviance in the other dimensions is removable; the bound
/// interval shrinks by set difference when that is a single interval and is
/// kept unchanged otherwise (including the no-op against unbounded sides,
/// where the farthest deviance is infinite and nothing can be proven
/// removed). The output contains the true difference.
pub fn rect_excl(r: &HyperRect, s: &SublevelSet<'_>) -> HyperRect {
    let mut out = r.clone();
    rect_excl_mut(&mut out, s);
    out
}

/// In-place, allocation-free form of [`rect_excl`].
pub(crate) fn rect_excl_mut(r: &mut HyperRect, s: &SublevelSet<'_>) {
    if r.is_empty() || s.is_full_space() {
        return;
    }
    let p = s.dims();
    debug_assert_eq!(r.dims(), p);
    let stats = s.data().stats(s.start(), s.end());
    if matches!(s.data().model(), CostModel::Gaussian) {
        match gaussian_screen(r, s) {
            Screen::Covered => {
                r.make_empty();
                return;
            }
            Screen::Disjoint => return,
            Screen::Partial => {}
        }
    }
    // Farthest box end per dimension, ties to the lower end; infinite ends
    // carry an infinite deviance and are tracked by count. Values are taken
    // against the original bounds before any cut lands.
    let mut stack = [0.0f64; STACK_DIMS];
    let mut heap;
    let vals: &mut [f64] = if p <= STACK_DIMS {
        &mut stack[..p]
    } else {
        heap = vec![0.0; p];
        &mut heap
    };
    let mut finite_sum = 0.0;
    let mut infinite = 0usize;
    for (k, val) in vals.iter_mut().enumerate() {
        let vlo = if r.lo[k].is_finite() {
            stats.dim_cost_at(k, r.lo[k])
        } else {
            f64::INFINITY
        };
        let vhi = if r.hi[k].is_finite() {
            stats.dim_cost_at(k, r.hi[k])
        } else {
            f64::INFINITY
        };
        let v = if vhi > vlo { vhi } else { vlo };
        if v.is_finite() {
            finite_sum += v;
        } else {
            infinite += 1;
        }
        *val = v;
    }
    for (k, &vk) in vals.iter().enumerate() {
        let others = match infinite {
            0 => finite_sum - vk,
            1 if !vk.is_finite() => finite_sum,
            _ => f64::INFINITY,
        };
        if others.is_infinite() {
            continue;
        }
        let level = s.delta() - others;
        let Some((a, b)) = s.dim_roots(k, level) else {
            continue;
        };
        if a >= r.lo[k] && b <= r.hi[k] {
            // Subset: the difference would split the interval; keep the bound.
            continue;
        }
        if b < r.lo[k] || a > r.hi[k] {
            continue;
        }
        if a <= r.lo[k] && b >= r.hi[k] {
            r.make_empty();
            return;
        }
        if a <= r.lo[k] {
            r.lo[k] = b;
        } else {
            r.hi[k] = a;
        }
    }
}
