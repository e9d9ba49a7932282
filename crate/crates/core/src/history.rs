//! Histories: continuous functions on `[-delta, 0]` stored on a grid.
//!
//! A [`Curve`] is a piecewise cubic Hermite (or piecewise linear) function on
//! an arbitrary increasing grid, with one-sided slopes at every node so that
//! derivative jumps can sit exactly on nodes. A [`HistorySegment`] is a curve
//! whose grid runs from `-delta` to `0`; it is the state of the system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Interpolation used between grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterpOrder {
    Linear,
    #[default]
    CubicHermite,
}

/// Which one-sided derivative to report at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Read access to a function on `[-horizon, 0]`.
///
/// Right-hand sides and functionals only need point evaluations, so they work
/// on any view: stored histories as well as windows into a trajectory that is
/// still being integrated.
pub trait HistoryView {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn interp_order(&self) -> InterpOrder;
    fn eval(&self, s: f64) -> Vector;
}

/// Piecewise Hermite curve with one-sided node slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    times: Vec<f64>,
    values: Vec<Vector>,
    left: Vec<Vector>,
    right: Vec<Vector>,
    order: InterpOrder,
}

impl Curve {
    pub fn new(
        times: Vec<f64>,
        values: Vec<Vector>,
        left: Vec<Vector>,
        right: Vec<Vector>,
        order: InterpOrder,
    ) -> Result<Self> {
        let k = times.len();
        if k < 2 {
            return Err(Error::InvalidHistory("at least two grid points required".into()));
        }
        if values.len() != k || left.len() != k || right.len() != k {
            return Err(Error::InvalidHistory(format!(
                "grid has {k} points but {} values / {} left slopes / {} right slopes",
                values.len(),
                left.len(),
                right.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidHistory("grid must be strictly increasing".into()));
        }
        let n = values[0].len();
        for v in values.iter().chain(left.iter()).chain(right.iter()) {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: v.len(),
                    context: "history node",
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidHistory("non-finite entry".into()));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidHistory("non-finite grid point".into()));
        }
        Ok(Self {
            times,
            values,
            left,
            right,
            order,
        })
    }

    /// Builds a curve from node values only; slopes are estimated from
    /// neighbouring nodes (three-point formulas).
    pub fn from_values(times: Vec<f64>, values: Vec<Vector>, order: InterpOrder) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Curve::new(times, values, Vec::new(), Vec::new(), order);
        }
        let slopes = match order {
            InterpOrder::CubicHermite => estimate_slopes(&times, &values),
            InterpOrder::Linear => Vec::new(),
        };
        let (left, right) = match order {
            InterpOrder::CubicHermite => (slopes.clone(), slopes),
            InterpOrder::Linear => secant_slopes(&times, &values),
        };
        Curve::new(times, values, left, right, order)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn left_slopes(&self) -> &[Vector] {
        &self.left
    }

    pub fn right_slopes(&self) -> &[Vector] {
        &self.right
    }

    pub fn order(&self) -> InterpOrder {
        self.order
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a node to the right end.
    pub(crate) fn push(&mut self, t: f64, x: Vector, left: Vector, right: Vector) {
        debug_assert!(t > self.end());
        self.times.push(t);
        self.values.push(x);
        self.left.push(left);
        self.right.push(right);
    }

    pub(crate) fn set_last_right(&mut self, slope: Vector) {
        let last = self.times.len() - 1;
        self.right[last] = slope;
    }

    /// One-sided derivative, treating `t` as a node when one lies within `tol`.
    ///
    /// Delayed arguments `t - delta_j` of a breakpoint can miss the stored
    /// kink by a rounding error; snapping keeps the correct side.
    pub(crate) fn deriv_near(&self, t: f64, side: Side, tol: f64) -> Vector {
        let j = self.times.partition_point(|&g| g < t);
        for c in [j.wrapping_sub(1), j] {
            if c < self.times.len() && (self.times[c] - t).abs() <= tol {
                return self.deriv(self.times[c], side);
            }
        }
        self.deriv(t, side)
    }

    /// Index `i` with `times[i] <= t < times[i+1]` (clamped to the last interval).
    fn interval(&self, t: f64) -> usize {
        let k = self.times.len();
        let idx = self.times.partition_point(|&g| g <= t);
        idx.clamp(1, k - 1) - 1
    }

    /// Index of the node equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|g| g.partial_cmp(&t).unwrap())
            .ok()
    }

    /// Value at `t`, clamped to the curve's domain. Exact at nodes.
    pub fn eval(&self, t: f64) -> Vector {
        let t = t.clamp(self.start(), self.end());
        if let Some(i) = self.node_index(t) {
            return self.values[i].clone();
        }
        let i = self.interval(t);
        self.eval_in(i, t)
    }

    fn eval_in(&self, i: usize, t: f64) -> Vector {
        let (a, b) = (self.times[i], self.times[i + 1]);
        let w = b - a;
        let tau = (t - a) / w;
        match self.order {
            InterpOrder::Linear => &self.values[i] * (1.0 - tau) + &self.values[i + 1] * tau,
            InterpOrder::CubicHermite => {
                let t2 = tau * tau;
                let t3 = t2 * tau;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + tau;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                let mut out = &self.values[i] * h00;
                out.axpy(h10 * w, &self.right[i], 1.0);
                out.axpy(h01, &self.values[i + 1], 1.0);
                out.axpy(h11 * w, &self.left[i + 1], 1.0);
                out
            }
        }
    }

    /// One-sided derivative at `t`. At interior points both sides agree.
    pub fn deriv(&self, t: f64, side: Side) -> Vector {
        let t = t.clamp(self.start(), self.end());
        if let Some(i) = self.node_index(t) {
            return match side {
                Side::Left if i > 0 => self.left[i].clone(),
                Side::Right if i + 1 < self.times.len() => self.right[i].clone(),
                Side::Left => self.right[i].clone(),
                Side::Right => self.left[i].clone(),
            };
        }
        let i = self.interval(t);
        let (a, b) = (self.times[i], self.times[i + 1]);
        let w = b - a;
        let tau = (t - a) / w;
        match self.order {
            InterpOrder::Linear => (&self.values[i + 1] - &self.values[i]) / w,
            InterpOrder::CubicHermite => {
                let t2 = tau * tau;
                let d00 = (6.0 * t2 - 6.0 * tau) / w;
                let d10 = 3.0 * t2 - 4.0 * tau + 1.0;
                let d01 = (-6.0 * t2 + 6.0 * tau) / w;
                let d11 = 3.0 * t2 - 2.0 * tau;
                let mut out = &self.values[i] * d00;
                out.axpy(d10, &self.right[i], 1.0);
                out.axpy(d01, &self.values[i + 1], 1.0);
                out.axpy(d11, &self.left[i + 1], 1.0);
                out
            }
        }
    }

    /// Interior nodes where the derivative may jump.
    pub fn kinks(&self) -> Vec<f64> {
        let k = self.times.len();
        (1..k - 1)
            .filter(|&i| self.order == InterpOrder::Linear || self.left[i] != self.right[i])
            .map(|i| self.times[i])
            .collect()
    }

    /// Sup of the Euclidean norm, from nodes plus interior sub-samples.
    pub fn sup_norm(&self) -> f64 {
        let mut m = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if self.order == InterpOrder::CubicHermite {
            const SUB: usize = 8;
            for i in 0..self.times.len() - 1 {
                let (a, b) = (self.times[i], self.times[i + 1]);
                for j in 1..SUB {
                    let t = a + (b - a) * j as f64 / SUB as f64;
                    m = m.max(self.eval_in(i, t).norm());
                }
            }
        }
        m
    }
}

fn secants(times: &[f64], values: &[Vector]) -> Vec<Vector> {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (&v[1] - &v[0]) / (t[1] - t[0]))
        .collect()
}

fn secant_slopes(times: &[f64], values: &[Vector]) -> (Vec<Vector>, Vec<Vector>) {
    let s = secants(times, values);
    let k = times.len();
    let left = (0..k).map(|i| s[i.max(1) - 1].clone()).collect();
    let right = (0..k).map(|i| s[i.min(k - 2)].clone()).collect();
    (left, right)
}

/// Three-point (parabolic) slope estimates on a non-uniform grid.
fn estimate_slopes(times: &[f64], values: &[Vector]) -> Vec<Vector> {
    let k = times.len();
    let s = secants(times, values);
    if k == 2 {
        return vec![s[0].clone(), s[0].clone()];
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = Vec::with_capacity(k);
    out.push(&s[0] * ((2.0 * h[0] + h[1]) / (h[0] + h[1])) - &s[1] * (h[0] / (h[0] + h[1])));
    for i in 1..k - 1 {
        let (h0, h1) = (h[i - 1], h[i]);
        out.push(&s[i - 1] * (h1 / (h0 + h1)) + &s[i] * (h0 / (h0 + h1)));
    }
    let (a, b) = (h[k - 2], h[k - 3]);
    out.push(&s[k - 2] * ((2.0 * a + b) / (a + b)) - &s[k - 3] * (a / (a + b)));
    out
}

/// A state of the system: a continuous function `[-delta, 0] -> R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySegment {
    delta: f64,
    curve: Curve,
}

impl HistorySegment {
    /// Wraps a curve whose grid must run from `-delta` (exclusive of rounding)
    /// to exactly `0`.
    pub fn from_curve(curve: Curve) -> Result<Self> {
        if curve.end() != 0.0 {
            return Err(Error::InvalidHistory(format!(
                "last grid point must be 0, found {}",
                curve.end()
            )));
        }
        let delta = -curve.start();
        if !(delta > 0.0) {
            return Err(Error::InvalidHistory("horizon must be positive".into()));
        }
        let mut curve = curve;
        // endpoint slopes are single-sided; keep them canonical
        let last = curve.times.len() - 1;
        curve.right[last] = curve.left[last].clone();
        curve.left[0] = curve.right[0].clone();
        Ok(Self { delta, curve })
    }

    /// History from node values; slopes estimated for cubic interpolation.
    pub fn new(grid: Vec<f64>, values: Vec<Vector>, order: InterpOrder) -> Result<Self> {
        Self::from_curve(Curve::from_values(grid, values, order)?)
    }

    /// History with explicitly given one-sided slopes.
    pub fn with_slopes(
        grid: Vec<f64>,
        values: Vec<Vector>,
        left: Vec<Vector>,
        right: Vec<Vector>,
        order: InterpOrder,
    ) -> Result<Self> {
        Self::from_curve(Curve::new(grid, values, left, right, order)?)
    }

    /// Constant history `phi(s) = value`.
    pub fn constant(delta: f64, value: Vector) -> Result<Self> {
        let zero = Vector::zeros(value.len());
        Self::with_slopes(
            vec![-delta, 0.0],
            vec![value.clone(), value],
            vec![zero.clone(), zero.clone()],
            vec![zero.clone(), zero],
            InterpOrder::CubicHermite,
        )
    }

    pub fn zero(n: usize, delta: f64) -> Result<Self> {
        Self::constant(delta, Vector::zeros(n))
    }

    /// Samples `f(s) -> (value, slope)` on a uniform grid of `nodes` points.
    pub fn from_fn<F>(delta: f64, nodes: usize, order: InterpOrder, f: F) -> Result<Self>
    where
        F: Fn(f64) -> (Vector, Vector),
    {
        if nodes < 2 {
            return Err(Error::InvalidHistory("at least two nodes required".into()));
        }
        let grid = uniform_grid(delta, nodes);
        let (values, slopes): (Vec<_>, Vec<_>) = grid.iter().map(|&s| f(s)).unzip();
        match order {
            InterpOrder::CubicHermite => {
                Self::with_slopes(grid, values, slopes.clone(), slopes, order)
            }
            InterpOrder::Linear => Self::new(grid, values, order),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.curve.dim()
    }

    pub fn grid(&self) -> &[f64] {
        self.curve.times()
    }

    pub fn values(&self) -> &[Vector] {
        self.curve.values()
    }

    pub fn curve(&self) -> &Curve {
        &self.curve
    }

    pub fn order(&self) -> InterpOrder {
        self.curve.order()
    }

    /// `phi(s)`, with `s` clamped into `[-delta, 0]`.
    pub fn eval(&self, s: f64) -> Vector {
        self.curve.eval(s)
    }

    pub fn deriv(&self, s: f64, side: Side) -> Vector {
        self.curve.deriv(s, side)
    }

    /// `phi(0)`.
    pub fn head(&self) -> &Vector {
        self.curve.values.last().unwrap()
    }

    pub fn kinks(&self) -> Vec<f64> {
        self.curve.kinks()
    }

    /// Supremum norm `||phi||`.
    pub fn sup_norm(&self) -> f64 {
        self.curve.sup_norm()
    }

    /// `c * phi` on the same grid.
    pub fn scaled(&self, c: f64) -> Self {
        let map = |v: &Vec<Vector>| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let curve = Curve {
            times: self.curve.times.clone(),
            values: map(&self.curve.values),
            left: map(&self.curve.left),
            right: map(&self.curve.right),
            order: self.curve.order,
        };
        Self {
            delta: self.delta,
            curve,
        }
    }

    /// `a * self + b * other`. Grids must coincide.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid() != other.grid() || self.order() != other.order() {
            return Err(Error::InvalidHistory(
                "linear combination needs identical grids and interpolation".into(),
            ));
        }
        let mix = |x: &[Vector], y: &[Vector]| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p * a + q * b)
                .collect::<Vec<_>>()
        };
        let curve = Curve {
            times: self.curve.times.clone(),
            values: mix(&self.curve.values, &other.curve.values),
            left: mix(&self.curve.left, &other.curve.left),
            right: mix(&self.curve.right, &other.curve.right),
            order: self.curve.order,
        };
        Ok(Self {
            delta: self.delta,
            curve,
        })
    }

    /// `||self - other||`, evaluated on the union of both grids plus
    /// interior sub-samples.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        if let Ok(diff) = self.combine(1.0, other, -1.0) {
            return diff.sup_norm();
        }
        let delta = self.delta.min(other.delta);
        let mut pts: Vec<f64> = self
            .grid()
            .iter()
            .chain(other.grid())
            .copied()
            .filter(|&s| s >= -delta)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let mut m: f64 = 0.0;
        for w in pts.windows(2) {
            for j in 0..8 {
                let s = w[0] + (w[1] - w[0]) * j as f64 / 8.0;
                m = m.max((self.eval(s) - other.eval(s)).norm());
            }
        }
        m.max((self.eval(0.0) - other.eval(0.0)).norm())
    }

    /// Resamples onto a uniform grid with the requested number of nodes.
    pub fn resampled(&self, nodes: usize) -> Result<Self> {
        let grid = uniform_grid(self.delta, nodes);
        let values = grid.iter().map(|&s| self.eval(s)).collect();
        let left = grid.iter().map(|&s| self.deriv(s, Side::Left)).collect();
        let right = grid.iter().map(|&s| self.deriv(s, Side::Right)).collect();
        Self::with_slopes(grid, values, left, right, self.order())
    }
}

impl HistoryView for HistorySegment {
    fn dim(&self) -> usize {
        self.curve.dim()
    }

    fn horizon(&self) -> f64 {
        self.delta
    }

    fn interp_order(&self) -> InterpOrder {
        self.curve.order()
    }

    fn eval(&self, s: f64) -> Vector {
        self.curve.eval(s)
    }
}

/// Uniform grid on `[-delta, 0]` with exact endpoints.
pub fn uniform_grid(delta: f64, nodes: usize) -> Vec<f64> {
    let k = nodes - 1;
    let mut grid: Vec<f64> = (0..=k)
        .map(|i| -delta + delta * i as f64 / k as f64)
        .collect();
    grid[0] = -delta;
    grid[k] = 0.0;
    grid
}

/// Integrates `w(s)^T phi(s)`-type products over `[-delta, 0]`.
///
/// `kernel_grid` holds the quadrature nodes and `integrand(s, i)` returns the
/// integrand at `s` where `i` is the kernel node index (or `None` for a
/// midpoint, where the caller interpolates its kernel). Linear order uses the
/// trapezoid rule on the kernel grid, cubic order uses Simpson's rule on each
/// kernel interval.
pub(crate) fn kernel_quadrature<F>(kernel_grid: &[f64], order: InterpOrder, mut integrand: F) -> Vector
where
    F: FnMut(f64, Option<usize>) -> Vector,
{
    let mut acc: Option<Vector> = None;
    let mut add = |v: Vector, w: f64| match acc.as_mut() {
        Some(a) => a.axpy(w, &v, 1.0),
        None => acc = Some(v * w),
    };
    for i in 0..kernel_grid.len() - 1 {
        let (a, b) = (kernel_grid[i], kernel_grid[i + 1]);
        let w = b - a;
        match order {
            InterpOrder::Linear => {
                add(integrand(a, Some(i)), 0.5 * w);
                add(integrand(b, Some(i + 1)), 0.5 * w);
            }
            InterpOrder::CubicHermite => {
                add(integrand(a, Some(i)), w / 6.0);
                add(integrand(0.5 * (a + b), None), 4.0 * w / 6.0);
                add(integrand(b, Some(i + 1)), w / 6.0);
            }
        }
    }
    acc.unwrap_or_else(|| Vector::zeros(0))
}

/// Kernel matrix at `s` by linear interpolation on its grid.
pub(crate) fn kernel_at(grid: &[f64], kernels: &[Matrix], s: f64) -> Matrix {
    let k = grid.len();
    let idx = grid.partition_point(|&g| g <= s).clamp(1, k - 1) - 1;
    let (a, b) = (grid[idx], grid[idx + 1]);
    let tau = ((s - a) / (b - a)).clamp(0.0, 1.0);
    &kernels[idx] * (1.0 - tau) + &kernels[idx + 1] * tau
}
