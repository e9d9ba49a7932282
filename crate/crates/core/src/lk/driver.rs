use rayon::prelude::*;

use super::Functional;
use crate::error::{Error, Result};
use crate::history::Side;
use crate::sim::Trajectory;
use crate::{HistorySegment, NfdeSystem, Vector};

/// Default ladder depth.
pub const DEFAULT_LADDER_DEPTH: usize = 12;

/// Number of trailing quotients forming the limsup window.
const TAIL: usize = 3;

/// Tail spread above this multiple of the median window spread flags the
/// quotients as nonsmooth.
const NONSMOOTH_FACTOR: f64 = 10.0;

/// Geometric ladder `h_k = h0 2^{-k}`, `k = 0..=depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ladder {
    pub h0: f64,
    pub depth: usize,
}

impl Ladder {
    pub fn new(h0: f64, depth: usize) -> Self {
        Self { h0, depth }
    }

    /// `h0 = min delay / 8`, depth 12.
    pub fn default_for(system: &NfdeSystem) -> Self {
        Self {
            h0: system.dop().min_delay() / 8.0,
            depth: DEFAULT_LADDER_DEPTH,
        }
    }

    pub fn steps(&self) -> Vec<f64> {
        (0..=self.depth).map(|k| self.h0 * 0.5f64.powi(k as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeEstimate {
    /// Max of the trailing quotients, a proxy for the limsup.
    pub value: f64,
    pub h_ladder: Vec<f64>,
    pub quotients: Vec<f64>,
    /// Spread (max - min) of the trailing quotients.
    pub error_band: f64,
    pub nonsmooth: bool,
}

/// The extension `phi_h` used by the Driver derivative.
///
/// `phi_h(s) = phi(s + h)` on `[-delta, -h]`; on `(-h, 0]`, with
/// `theta = s + h`, `phi_h(s) = D phi + f(phi[, u]) theta - D phi*_theta + phi(0)`,
/// where `phi*_theta` is `phi` shifted by `theta` and held at `phi(0)`.
/// Because `theta < min_j delta_j`, `D phi*_theta = phi(0) - sum_j A_j phi(theta - delta_j)`,
/// so the branch is piecewise polynomial with breaks at `g_i + delta_j`
/// (`g_i` the grid of `phi`); those breaks become nodes and the result is
/// exact for the interpolant of `phi`. In particular `D phi_h = D phi + h f(phi)`.
pub fn phi_h_extend(system: &NfdeSystem, phi: &HistorySegment, h: f64, u: Option<&Vector>) -> Result<HistorySegment> {
    let delta = system.delta();
    let dop = system.dop();
    if phi.dim() != system.dim() {
        return Err(Error::Dimension {
            expected: system.dim(),
            found: phi.dim(),
            context: "history for phi_h",
        });
    }
    if (phi.delta() - delta).abs() > 1e-12 * delta {
        return Err(Error::Horizon {
            horizon: phi.delta(),
            required: delta,
        });
    }
    let min_delay = dop.min_delay();
    if !(h > 0.0) || h >= min_delay || h >= delta {
        return Err(Error::Precondition(format!(
            "extension step h = {h} must lie in (0, min delay = {min_delay})"
        )));
    }
    let f = system.rhs().eval(phi, u)?;
    let z = dop.apply(phi)?;

    let branch = |theta: f64| -> Vector {
        let mut v = &z + &f * theta;
        for (d, a) in dop.delays().iter().zip(dop.matrices()) {
            v.gemv(1.0, a, &phi.eval(theta - d), 1.0);
        }
        v
    };
    let branch_slope = |theta: f64, side: Side| -> Vector {
        let mut v = f.clone();
        for (d, a) in dop.delays().iter().zip(dop.matrices()) {
            v.gemv(1.0, a, &phi.deriv(theta - d, side), 1.0);
        }
        v
    };

    let grid = phi.grid();
    let curve = phi.curve();
    let tol = 1e-13 * delta;
    let mut g = Vec::new();
    let mut vals = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();

    // shifted part on [-delta, -h]
    let lo = -delta + h;
    let first = grid.partition_point(|&s| s <= lo + tol);
    g.push(-delta);
    vals.push(phi.eval(lo));
    let d = if first > 0 && (grid[first - 1] - lo).abs() <= tol {
        curve.right_slopes()[first - 1].clone()
    } else {
        phi.deriv(lo, Side::Right)
    };
    left.push(d.clone());
    right.push(d);
    let last = grid.len() - 1;
    for i in first..last {
        g.push(grid[i] - h);
        vals.push(curve.values()[i].clone());
        left.push(curve.left_slopes()[i].clone());
        right.push(curve.right_slopes()[i].clone());
    }
    // the joint s = -h: phi(0) from the left, branch from the right
    g.push(-h);
    vals.push(phi.head().clone());
    left.push(curve.left_slopes()[last].clone());
    right.push(branch_slope(0.0, Side::Right));

    // branch nodes on (-h, 0]
    let mut thetas: Vec<f64> = dop
        .delays()
        .iter()
        .flat_map(|d| grid.iter().map(move |gi| gi + d))
        .filter(|&t| t > tol && t < h - tol)
        .collect();
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup_by(|b, a| (*b - *a).abs() <= tol);
    for &theta in &thetas {
        g.push(theta - h);
        vals.push(branch(theta));
        left.push(branch_slope(theta, Side::Left));
        right.push(branch_slope(theta, Side::Right));
    }
    g.push(0.0);
    vals.push(branch(h));
    let end = branch_slope(h, Side::Left);
    left.push(end.clone());
    right.push(end);

    HistorySegment::with_slopes(g, vals, left, right, phi.order())
}

fn spread(q: &[f64]) -> f64 {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Ladder estimate of `D+V(phi) = limsup_{h -> 0+} (V(phi_h) - V(phi)) / h`.
pub fn driver_derivative(
    system: &NfdeSystem,
    v: &Functional,
    phi: &HistorySegment,
    u: Option<&Vector>,
    ladder: &Ladder,
) -> Result<DerivativeEstimate> {
    if ladder.depth + 1 < TAIL {
        return Err(Error::Precondition(format!("ladder needs at least {TAIL} steps")));
    }
    if !(ladder.h0 > 0.0) || ladder.h0 >= system.dop().min_delay() {
        return Err(Error::Precondition(format!(
            "ladder start h0 = {} must lie in (0, min delay)",
            ladder.h0
        )));
    }
    let v0 = v.eval(system, phi)?;
    let hs = ladder.steps();
    let quotients = hs
        .par_iter()
        .map(|&h| {
            let ext = phi_h_extend(system, phi, h, u)?;
            Ok((v.eval(system, &ext)? - v0) / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    let tail = &quotients[quotients.len() - TAIL..];
    let value = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let error_band = spread(tail);
    let mut windows: Vec<f64> = quotients.windows(TAIL).map(spread).collect();
    windows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = windows[windows.len() / 2];
    Ok(DerivativeEstimate {
        value,
        h_ladder: hs,
        quotients,
        error_band,
        nonsmooth: error_band > NONSMOOTH_FACTOR * median,
    })
}

/// Result of comparing the forward difference of `V(x_t)` with `D+V(x_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Consistency {
    pub max_deviation: f64,
    /// Largest `|D+V(x_t)|` over the grid, the scale for relative deviations.
    pub max_reference: f64,
    /// `(t, forward difference, Driver estimate)` per grid time.
    pub points: Vec<(f64, f64, f64)>,
}

/// Max over `t_grid` of `|(V(x_{t+h_fd}) - V(x_t)) / h_fd - D+V(x_t, u(t))|`.
pub fn trajectory_consistency(
    system: &NfdeSystem,
    v: &Functional,
    traj: &Trajectory,
    t_grid: &[f64],
    h_fd: f64,
    ladder: &Ladder,
) -> Result<Consistency> {
    if traj.blowup() {
        return Err(Error::Precondition("trajectory flagged blowup".into()));
    }
    let guard = 2.0 * traj.step();
    let points = t_grid
        .par_iter()
        .map(|&t| {
            if t < 0.0 || t + h_fd > traj.t_end() {
                return Err(Error::OutOfRange { t, t_end: traj.t_end() });
            }
            if traj.breakpoints().iter().any(|&b| b > 0.0 && (t - b).abs() < guard) {
                return Err(Error::Precondition(format!("grid time {t} is within two steps of a breakpoint")));
            }
            let seg = traj.segment(t)?;
            let fd = (v.eval(system, &traj.segment(t + h_fd)?)? - v.eval(system, &seg)?) / h_fd;
            let u = traj.input_value(t);
            let dd = driver_derivative(system, v, &seg, u.as_ref(), ladder)?;
            Ok((t, fd, dd.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = points.iter().map(|p| (p.1 - p.2).abs()).fold(0.0, f64::max);
    let max_reference = points.iter().map(|p| p.2.abs()).fold(0.0, f64::max);
    Ok(Consistency {
        max_deviation,
        max_reference,
        points,
    })
}
