//! Right-hand side maps `f(phi)` and `f(phi, u)`.

use crate::error::{Error, Result};
use crate::history::{kernel_at, kernel_quadrature, HistoryView};
use crate::{Matrix, Vector};

/// Scalar nonlinearity applied componentwise.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    Identity,
    /// `clamp(x, -level, level)`.
    Saturation { level: f64 },
    Sine,
    Cubic,
    /// Piecewise-linear table with linear extrapolation past the ends.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl Nonlinearity {
    /// Resolves a primitive by name. `level` applies to `sat`; `xs`/`ys` to `table`.
    pub fn from_name(name: &str, level: Option<f64>, table: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        match name {
            "identity" | "id" => Ok(Self::Identity),
            "sat" | "saturation" => {
                let level = level.unwrap_or(1.0);
                if !(level > 0.0) {
                    return Err(Error::InvalidRhs(format!("saturation level {level} must be positive")));
                }
                Ok(Self::Saturation { level })
            }
            "sin" | "sine" => Ok(Self::Sine),
            "cubic" => Ok(Self::Cubic),
            "table" => {
                let (xs, ys) = table.ok_or_else(|| Error::InvalidRhs("table nonlinearity needs xs and ys".into()))?;
                if xs.len() < 2 || xs.len() != ys.len() {
                    return Err(Error::InvalidRhs("table needs at least two (x, y) pairs".into()));
                }
                if xs.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidRhs("table abscissae must be strictly increasing".into()));
                }
                Ok(Self::Table { xs, ys })
            }
            other => Err(Error::UnknownNonlinearity(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Saturation { .. } => "sat",
            Self::Sine => "sin",
            Self::Cubic => "cubic",
            Self::Table { .. } => "table",
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Saturation { level } => x.clamp(-level, *level),
            Self::Sine => x.sin(),
            Self::Cubic => x * x * x,
            Self::Table { xs, ys } => {
                let k = xs.len();
                let i = xs.partition_point(|&g| g <= x).clamp(1, k - 1) - 1;
                let tau = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + tau * (ys[i + 1] - ys[i])
            }
        }
    }

    fn apply_vec(&self, v: &Vector) -> Vector {
        match self {
            Self::Identity => v.clone(),
            _ => v.map(|x| self.apply(x)),
        }
    }
}

/// One additive term of the right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub enum RhsTerm {
    /// `B phi(-tau)`.
    Delay { tau: f64, matrix: Matrix },
    /// `integral over the kernel grid of K(s) phi(s) ds`.
    Distributed { grid: Vec<f64>, kernels: Vec<Matrix> },
    /// `G g(phi(-tau))` with `g` applied componentwise.
    Nonlinear {
        tau: f64,
        gain: Matrix,
        nonlinearity: Nonlinearity,
    },
    /// `B h(u)` with `h` applied componentwise.
    Input { gain: Matrix, nonlinearity: Nonlinearity },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhsMap {
    n: usize,
    m: usize,
    terms: Vec<RhsTerm>,
}

impl RhsMap {
    pub fn new(n: usize, m: usize, terms: Vec<RhsTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRhs("state dimension must be positive".into()));
        }
        let square = |g: &Matrix, what: &str| -> Result<()> {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::InvalidRhs(format!(
                    "{what} has shape {}x{}, expected {n}x{n}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            Ok(())
        };
        for term in &terms {
            match term {
                RhsTerm::Delay { tau, matrix } => {
                    check_tau(*tau)?;
                    square(matrix, "delay term matrix")?;
                }
                RhsTerm::Nonlinear { tau, gain, .. } => {
                    check_tau(*tau)?;
                    square(gain, "nonlinear term gain")?;
                }
                RhsTerm::Distributed { grid, kernels } => {
                    if grid.len() < 2 || grid.len() != kernels.len() {
                        return Err(Error::InvalidRhs(
                            "distributed kernel needs one matrix per grid point (at least two)".into(),
                        ));
                    }
                    if grid.windows(2).any(|w| !(w[1] > w[0])) || *grid.last().unwrap() > 0.0 {
                        return Err(Error::InvalidRhs(
                            "distributed kernel grid must be increasing inside [-delta, 0]".into(),
                        ));
                    }
                    for k in kernels {
                        square(k, "distributed kernel")?;
                    }
                }
                RhsTerm::Input { gain, .. } => {
                    if m == 0 {
                        return Err(Error::InvalidRhs("input term in a system with m = 0".into()));
                    }
                    if gain.nrows() != n || gain.ncols() != m {
                        return Err(Error::InvalidRhs(format!(
                            "input gain has shape {}x{}, expected {n}x{m}",
                            gain.nrows(),
                            gain.ncols()
                        )));
                    }
                }
            }
        }
        Ok(Self { n, m, terms })
    }

    /// `f(phi) = sum_k B_k phi(-tau_k)`.
    pub fn linear(terms: Vec<(f64, Matrix)>) -> Result<Self> {
        let n = terms.first().map(|(_, b)| b.nrows()).unwrap_or(1);
        Self::new(
            n,
            0,
            terms
                .into_iter()
                .map(|(tau, matrix)| RhsTerm::Delay { tau, matrix })
                .collect(),
        )
    }

    /// Scalar `f(phi) = sum_k b_k phi(-tau_k)`.
    pub fn scalar(terms: &[(f64, f64)]) -> Result<Self> {
        Self::linear(
            terms
                .iter()
                .map(|&(tau, b)| (tau, Matrix::from_element(1, 1, b)))
                .collect(),
        )
    }

    /// `f = 0` in dimension `n`.
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            m: 0,
            terms: Vec::new(),
        }
    }

    /// Adds an input channel term `gain * h(u)`, growing `m` if needed.
    pub fn with_input(mut self, gain: Matrix, nonlinearity: Nonlinearity) -> Result<Self> {
        self.m = gain.ncols();
        self.terms.push(RhsTerm::Input { gain, nonlinearity });
        Self::new(self.n, self.m, self.terms)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[RhsTerm] {
        &self.terms
    }

    /// Largest delay read by any term.
    pub fn max_delay(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                RhsTerm::Delay { tau, .. } | RhsTerm::Nonlinear { tau, .. } => *tau,
                RhsTerm::Distributed { grid, .. } => -grid[0],
                RhsTerm::Input { .. } => 0.0,
            })
            .fold(0.0, f64::max)
    }

    /// Strictly positive pointwise delays (these propagate derivative jumps).
    pub fn pointwise_delays(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                RhsTerm::Delay { tau, .. } | RhsTerm::Nonlinear { tau, .. } if *tau > 0.0 => Some(*tau),
                _ => None,
            })
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    /// Smallest positive delay read by the map, including the start of
    /// distributed kernels that reach into the current time.
    pub fn min_positive_delay(&self) -> Option<f64> {
        self.pointwise_delays().first().copied()
    }

    /// `f(phi)` or `f(phi, u)`. A missing input is read as `u = 0`.
    pub fn eval<H: HistoryView + ?Sized>(&self, phi: &H, u: Option<&Vector>) -> Result<Vector> {
        if phi.dim() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: phi.dim(),
                context: "right-hand side argument",
            });
        }
        if let Some(u) = u {
            if u.len() != self.m {
                return Err(Error::Dimension {
                    expected: self.m,
                    found: u.len(),
                    context: "input value",
                });
            }
        }
        let required = self.max_delay();
        if phi.horizon() < required * (1.0 - 1e-12) {
            return Err(Error::Horizon {
                horizon: phi.horizon(),
                required,
            });
        }
        Ok(self.eval_unchecked(phi, u))
    }

    pub(crate) fn eval_unchecked<H: HistoryView + ?Sized>(&self, phi: &H, u: Option<&Vector>) -> Vector {
        let mut out = Vector::zeros(self.n);
        for term in &self.terms {
            match term {
                RhsTerm::Delay { tau, matrix } => out.gemv(1.0, matrix, &phi.eval(-tau), 1.0),
                RhsTerm::Nonlinear {
                    tau,
                    gain,
                    nonlinearity,
                } => out.gemv(1.0, gain, &nonlinearity.apply_vec(&phi.eval(-tau)), 1.0),
                RhsTerm::Distributed { grid, kernels } => {
                    let v = kernel_quadrature(grid, phi.interp_order(), |s, idx| {
                        let x = phi.eval(s);
                        match idx {
                            Some(i) => &kernels[i] * x,
                            None => kernel_at(grid, kernels, s) * x,
                        }
                    });
                    out += v;
                }
                RhsTerm::Input { gain, nonlinearity } => {
                    if let Some(u) = u {
                        out.gemv(1.0, gain, &nonlinearity.apply_vec(u), 1.0);
                    }
                }
            }
        }
        out
    }

    /// `f(phi, u) - f(phi, 0)`, which does not depend on `phi`: only the
    /// input terms see `u`.
    pub fn input_increment(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                found: u.len(),
                context: "input value",
            });
        }
        let zero = Vector::zeros(self.m);
        let mut out = Vector::zeros(self.n);
        for term in &self.terms {
            if let RhsTerm::Input { gain, nonlinearity } = term {
                out.gemv(1.0, gain, &(nonlinearity.apply_vec(u) - nonlinearity.apply_vec(&zero)), 1.0);
            }
        }
        Ok(out)
    }

    /// `f(0) = 0` (and `f(0, 0) = 0`), checked by evaluation.
    pub fn vanishes_at_zero(&self) -> bool {
        let delta = self.max_delay().max(1.0);
        let zero = match crate::HistorySegment::zero(self.n, delta) {
            Ok(z) => z,
            Err(_) => return false,
        };
        let u = Vector::zeros(self.m);
        self.eval_unchecked(&zero, Some(&u)).iter().all(|&x| x == 0.0)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidRhs(format!("delay {tau} must be non-negative")));
    }
    Ok(())
}
