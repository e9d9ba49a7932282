//! The linear difference operator `D phi = phi(0) - sum_j A_j phi(-delta_j)`.

use crate::error::{Error, Result};
use crate::history::HistoryView;
use crate::{HistorySegment, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceOperator {
    n: usize,
    delays: Vec<f64>,
    matrices: Vec<Matrix>,
}

impl DifferenceOperator {
    pub fn new(delays: Vec<f64>, matrices: Vec<Matrix>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::InvalidOperator("at least one delay term required".into()));
        }
        if delays.len() != matrices.len() {
            return Err(Error::InvalidOperator(format!(
                "{} delays but {} matrices",
                delays.len(),
                matrices.len()
            )));
        }
        let n = matrices[0].nrows();
        for a in &matrices {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidOperator(format!(
                    "matrix of shape {}x{} in an operator of dimension {n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidOperator("non-finite matrix entry".into()));
            }
        }
        for (i, &d) in delays.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidOperator(format!("delay {d} must be positive")));
            }
            if delays[..i].contains(&d) {
                return Err(Error::InvalidOperator(format!("delay {d} repeated")));
            }
        }
        Ok(Self {
            n,
            delays,
            matrices,
        })
    }

    /// Single-delay operator `phi(0) - A phi(-delay)`.
    pub fn single(delay: f64, a: Matrix) -> Result<Self> {
        Self::new(vec![delay], vec![a])
    }

    /// Scalar operator from `(delay, coefficient)` pairs.
    pub fn scalar(terms: &[(f64, f64)]) -> Result<Self> {
        let (d, a): (Vec<_>, Vec<_>) = terms
            .iter()
            .map(|&(d, a)| (d, Matrix::from_element(1, 1, a)))
            .unzip();
        Self::new(d, a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every `A_j` is zero, i.e. `D phi = phi(0)`.
    pub fn is_trivial(&self) -> bool {
        self.matrices.iter().all(|a| a.iter().all(|&x| x == 0.0))
    }

    /// `sum_j |A_j|` with the induced Euclidean norm.
    pub fn coefficient_norm_sum(&self) -> f64 {
        self.matrices.iter().map(|a| a.clone().svd(false, false).singular_values.max()).sum()
    }

    /// `D phi` for any view; checks dimension and horizon.
    pub fn apply<H: HistoryView + ?Sized>(&self, phi: &H) -> Result<Vector> {
        if phi.dim() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: phi.dim(),
                context: "difference operator argument",
            });
        }
        let required = self.max_delay();
        if phi.horizon() < required * (1.0 - 1e-12) {
            return Err(Error::Horizon {
                horizon: phi.horizon(),
                required,
            });
        }
        Ok(self.apply_unchecked(phi))
    }

    pub(crate) fn apply_unchecked<H: HistoryView + ?Sized>(&self, phi: &H) -> Vector {
        let mut out = phi.eval(0.0);
        for (d, a) in self.delays.iter().zip(&self.matrices) {
            out.gemv(-1.0, a, &phi.eval(-d), 1.0);
        }
        out
    }
}

/// `D phi` (free function form of [`DifferenceOperator::apply`]).
pub fn dop_apply(dop: &DifferenceOperator, phi: &HistorySegment) -> Result<Vector> {
    dop.apply(phi)
}
