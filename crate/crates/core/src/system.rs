use crate::error::{Error, Result};
use crate::{DifferenceOperator, RhsMap};

/// `d/dt D x_t = f(x_t[, u(t)])` with a linear difference operator `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct NfdeSystem {
    dop: DifferenceOperator,
    rhs: RhsMap,
    delta: f64,
}

impl NfdeSystem {
    pub fn new(dop: DifferenceOperator, rhs: RhsMap) -> Result<Self> {
        if dop.dim() != rhs.dim() {
            return Err(Error::Dimension {
                expected: dop.dim(),
                found: rhs.dim(),
                context: "rhs dimension vs difference operator",
            });
        }
        if !rhs.vanishes_at_zero() {
            return Err(Error::InvalidRhs("f(0) (or f(0, 0)) must vanish".into()));
        }
        let delta = dop.max_delay().max(rhs.max_delay());
        Ok(Self { dop, rhs, delta })
    }

    /// Scalar system from `(delay, a_j)` operator terms and `(tau, b_k)` rhs terms.
    pub fn scalar(dop: &[(f64, f64)], rhs: &[(f64, f64)]) -> Result<Self> {
        Self::new(DifferenceOperator::scalar(dop)?, RhsMap::scalar(rhs)?)
    }

    pub fn dop(&self) -> &DifferenceOperator {
        &self.dop
    }

    pub fn rhs(&self) -> &RhsMap {
        &self.rhs
    }

    /// Maximum delay `Delta`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dop.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.rhs.input_dim()
    }

    /// Every delay that propagates derivative jumps: operator delays and
    /// positive pointwise rhs delays, sorted and deduplicated.
    pub fn propagation_delays(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .dop
            .delays()
            .iter()
            .copied()
            .chain(self.rhs.pointwise_delays())
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d.dedup();
        d
    }

    /// Smallest delay of any kind (operator or positive rhs delay).
    pub fn min_delay(&self) -> f64 {
        self.propagation_delays()[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhs::{Nonlinearity, RhsTerm};
    use nalgebra::dmatrix;

    #[test]
    fn delta_covers_all_delays() {
        let sys = NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0), (1.5, 0.1)]).unwrap();
        assert_eq!(sys.delta(), 1.5);
        assert_eq!(sys.propagation_delays(), vec![1.0, 1.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let dop = DifferenceOperator::single(1.0, dmatrix![0.0, 0.0; 0.0, 0.0]).unwrap();
        let rhs = RhsMap::scalar(&[(0.0, -1.0)]).unwrap();
        assert!(NfdeSystem::new(dop, rhs).is_err());
    }

    #[test]
    fn nonzero_at_origin_rejected() {
        let dop = DifferenceOperator::scalar(&[(1.0, 0.0)]).unwrap();
        let g = Nonlinearity::from_name("table", None, Some((vec![-1.0, 1.0], vec![1.0, 1.0]))).unwrap();
        let rhs = RhsMap::new(
            1,
            0,
            vec![RhsTerm::Nonlinear {
                tau: 0.0,
                gain: dmatrix![1.0],
                nonlinearity: g,
            }],
        )
        .unwrap();
        assert!(NfdeSystem::new(dop, rhs).is_err());
    }
}
