//! Strong stability of the difference operator.
//!
//! The margin is `gamma0 = sup over the torus of rho(sum_j A_j e^{i theta_j})`;
//! the operator is strongly stable iff `gamma0 < 1`. For one delay the sup is
//! just the spectral radius of `A_1`. Because `rho` is invariant under a
//! common phase `e^{i psi}`, the sweep fixes `theta_1 = 0` and covers the
//! remaining `p - 1` angles on a uniform grid, followed by coordinate
//! refinement around the best grid point.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::{DifferenceOperator, Matrix};

/// Largest number of delay terms handled by the exhaustive sweep.
pub const SWEEP_LIMIT: usize = 4;

/// Smallest accepted grid resolution per angle.
pub const MIN_RESOLUTION: usize = 8;

pub const DEFAULT_MARGIN_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityMargin {
    pub gamma0: f64,
    /// Angles (one per delay term) where the sup was found; `theta_1 = 0`.
    pub argmax_theta: Vec<f64>,
    pub grid_resolution: usize,
    pub refined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrongStability {
    Stable,
    Unstable,
    Inconclusive,
}

impl StrongStability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Inconclusive => "inconclusive",
        }
    }
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn complex_spectral_radius(m: &DMatrix<Complex64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)].norm(),
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr * 0.25 - det).sqrt();
            let h = tr * 0.5;
            (h + disc).norm().max((h - disc).norm())
        }
        _ => m
            .clone()
            .schur()
            .eigenvalues()
            .map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .unwrap_or(f64::NAN),
    }
}

/// `rho(sum_j A_j e^{i theta_j})`.
pub fn spectral_radius_at(dop: &DifferenceOperator, theta: &[f64]) -> f64 {
    let n = dop.dim();
    if n == 1 {
        let z: Complex64 = dop
            .matrices()
            .iter()
            .zip(theta)
            .map(|(a, &t)| Complex64::from_polar(a[(0, 0)], t))
            .sum();
        return z.norm();
    }
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (a, &t) in dop.matrices().iter().zip(theta) {
        let e = Complex64::from_polar(1.0, t);
        m.zip_apply(a, |x, y| *x += e * y);
    }
    complex_spectral_radius(&m)
}

fn check_sweep(dop: &DifferenceOperator, resolution: usize) -> Result<()> {
    if dop.p() > SWEEP_LIMIT {
        return Err(Error::UnsupportedSweep {
            p: dop.p(),
            limit: SWEEP_LIMIT,
        });
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::Precondition(format!(
            "torus resolution {resolution} below the minimum {MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Torus sweep for `gamma0`, then `refine_iters` rounds of coordinate bisection.
pub fn gamma0(dop: &DifferenceOperator, resolution: usize, refine_iters: usize) -> Result<StabilityMargin> {
    check_sweep(dop, resolution)?;
    let p = dop.p();
    if p == 1 {
        return Ok(StabilityMargin {
            gamma0: spectral_radius(&dop.matrices()[0]),
            argmax_theta: vec![0.0],
            grid_resolution: resolution,
            refined: false,
        });
    }
    let free = p - 1;
    let total = resolution.pow(free as u32);
    let step = std::f64::consts::TAU / resolution as f64;
    let angles = |mut idx: usize| {
        let mut theta = vec![0.0; p];
        for t in theta.iter_mut().skip(1) {
            *t = (idx % resolution) as f64 * step;
            idx /= resolution;
        }
        theta
    };
    // ties resolve to the smallest index so the result is schedule independent
    let (best_val, best_idx) = (0..total)
        .into_par_iter()
        .map(|i| (spectral_radius_at(dop, &angles(i)), i))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                    a
                } else {
                    b
                }
            },
        );
    let mut theta = angles(best_idx);
    let mut value = best_val;
    let mut delta = step;
    for _ in 0..refine_iters {
        delta *= 0.5;
        for j in 1..p {
            for sign in [-1.0, 1.0] {
                let mut trial = theta.clone();
                trial[j] += sign * delta;
                let v = spectral_radius_at(dop, &trial);
                if v > value {
                    value = v;
                    theta = trial;
                }
            }
        }
    }
    for t in theta.iter_mut() {
        *t = t.rem_euclid(std::f64::consts::TAU);
    }
    Ok(StabilityMargin {
        gamma0: value,
        argmax_theta: theta,
        grid_resolution: resolution,
        refined: refine_iters > 0,
    })
}

/// Strong-stability verdict. One delay: exact eigenvalue test of `A_1`.
/// Several delays: compare the refined `gamma0` with `1 -/+ margin_tol`.
pub fn is_strongly_stable(
    dop: &DifferenceOperator,
    resolution: usize,
    margin_tol: f64,
) -> Result<(StrongStability, StabilityMargin)> {
    let margin = gamma0(dop, resolution, 30)?;
    let verdict = if dop.p() == 1 {
        if margin.gamma0 < 1.0 {
            StrongStability::Stable
        } else {
            StrongStability::Unstable
        }
    } else if margin.gamma0 < 1.0 - margin_tol {
        StrongStability::Stable
    } else if margin.gamma0 > 1.0 + margin_tol {
        StrongStability::Unstable
    } else {
        StrongStability::Inconclusive
    };
    Ok((verdict, margin))
}
