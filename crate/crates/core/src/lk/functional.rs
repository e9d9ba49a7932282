use crate::error::{Error, Result};
use crate::history::{kernel_at, kernel_quadrature, HistoryView};
use crate::sim::{integrate, StepPolicy};
use crate::{HistorySegment, Matrix, NfdeSystem, Vector};

/// Golden-section iterations used to refine the converse sup between nodes.
const GOLDEN_ITERS: usize = 40;

/// Trajectory-based functional `V(phi) = sup_{t in [0, T]} |D x_t(phi)| e^{a t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConverseFunctional {
    pub rate: f64,
    pub horizon: f64,
    pub step: f64,
}

impl ConverseFunctional {
    pub fn eval(&self, system: &NfdeSystem, phi: &HistorySegment) -> Result<f64> {
        let tr = integrate(system, phi, self.horizon, &StepPolicy::fixed(self.step), None)?;
        if tr.blowup() {
            return Err(Error::Evaluation(format!(
                "solution escaped the blowup bound at t = {}",
                tr.t_end()
            )));
        }
        let a = self.rate;
        let weight = |t: f64, z: &Vector| z.norm() * (a * t).exp();
        let ts = tr.times();
        let (best, mut value) = ts
            .iter()
            .zip(tr.dop_values())
            .map(|(&t, z)| weight(t, z))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let g = |t: f64| weight(t, &tr.dop_value(t));
        if best > 0 {
            value = value.max(golden_max(&g, ts[best - 1], ts[best]));
        }
        if best + 1 < ts.len() {
            value = value.max(golden_max(&g, ts[best], ts[best + 1]));
        }
        Ok(value)
    }
}

fn golden_max<F: Fn(f64) -> f64>(g: &F, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..GOLDEN_ITERS {
        if gc > gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - r * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + r * (hi - lo);
            gd = g(d);
        }
    }
    gc.max(gd)
}

/// Evaluatable functional `V: C -> R+`.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    /// `(D phi)^T P (D phi)`.
    PointQuadratic { p: Matrix },
    /// `(D phi)^T P (D phi) + int_{-r}^0 phi(s)^T Q(s) phi(s) ds`, `Q` tabulated on `grid`.
    IntegralQuadratic { p: Matrix, grid: Vec<f64>, q: Vec<Matrix> },
    /// `c ||phi||`.
    SupNorm { c: f64 },
    /// `c |D phi|`.
    DopNorm { c: f64 },
    Converse(ConverseFunctional),
    /// `sum_k w_k V_k(phi)`.
    Composite { terms: Vec<(f64, Functional)> },
}

fn check_psd(m: &Matrix, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: m.nrows(),
            context: "functional weight matrix",
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("{what} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Precondition(format!("{what} must be symmetric")));
    }
    let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-12 * scale {
        return Err(Error::Precondition(format!("{what} must be positive semidefinite")));
    }
    Ok(())
}

impl Functional {
    pub fn dop_quadratic(p: Matrix) -> Self {
        Self::PointQuadratic { p }
    }

    /// Checks parameters against the system: dimensions, symmetry and
    /// semidefiniteness of weights, nonnegative scalars and a kernel grid
    /// inside `[-delta, 0]`.
    pub fn validate(&self, system: &NfdeSystem) -> Result<()> {
        let n = system.dim();
        match self {
            Self::PointQuadratic { p } => check_psd(p, n, "P"),
            Self::IntegralQuadratic { p, grid, q } => {
                check_psd(p, n, "P")?;
                if grid.len() < 2 || grid.len() != q.len() {
                    return Err(Error::Precondition("Q needs one matrix per grid node (>= 2)".into()));
                }
                if *grid.last().unwrap() != 0.0
                    || grid[0] < -system.delta() * (1.0 + 1e-12)
                    || grid.windows(2).any(|w| !(w[1] > w[0]))
                {
                    return Err(Error::Precondition("Q grid must increase inside [-delta, 0] and end at 0".into()));
                }
                q.iter().try_for_each(|m| check_psd(m, n, "Q(s)"))
            }
            Self::SupNorm { c } | Self::DopNorm { c } => {
                if !(*c >= 0.0) || !c.is_finite() {
                    return Err(Error::Precondition("scale must be finite and nonnegative".into()));
                }
                Ok(())
            }
            Self::Converse(cv) => {
                if !(cv.rate > 0.0) || !(cv.horizon > 0.0) || !(cv.step > 0.0) {
                    return Err(Error::Precondition("converse rate, horizon and step must be positive".into()));
                }
                Ok(())
            }
            Self::Composite { terms } => {
                if terms.is_empty() {
                    return Err(Error::Precondition("composite functional without terms".into()));
                }
                for (w, t) in terms {
                    if !(*w >= 0.0) || !w.is_finite() {
                        return Err(Error::Precondition("composite weights must be nonnegative".into()));
                    }
                    t.validate(system)?;
                }
                Ok(())
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::PointQuadratic { .. } => "point-quadratic",
            Self::IntegralQuadratic { .. } => "integral-quadratic",
            Self::SupNorm { .. } => "sup-norm",
            Self::DopNorm { .. } => "dop-norm",
            Self::Converse(_) => "converse",
            Self::Composite { .. } => "composite",
        }
    }

    /// Contains a sup-norm or converse part, whose derivative quotients are
    /// not expected to settle smoothly.
    pub fn is_nonsmooth(&self) -> bool {
        match self {
            Self::SupNorm { .. } | Self::Converse(_) => true,
            Self::Composite { terms } => terms.iter().any(|(_, t)| t.is_nonsmooth()),
            _ => false,
        }
    }

    /// `V(phi)`.
    pub fn eval(&self, system: &NfdeSystem, phi: &HistorySegment) -> Result<f64> {
        if phi.dim() != system.dim() {
            return Err(Error::Dimension {
                expected: system.dim(),
                found: phi.dim(),
                context: "functional argument",
            });
        }
        match self {
            Self::PointQuadratic { p } => {
                let z = system.dop().apply(phi)?;
                Ok(z.dot(&(p * &z)))
            }
            Self::IntegralQuadratic { p, grid, q } => {
                let z = system.dop().apply(phi)?;
                Ok(z.dot(&(p * &z)) + quadratic_integral(phi, grid, q))
            }
            Self::SupNorm { c } => Ok(c * phi.sup_norm()),
            Self::DopNorm { c } => Ok(c * system.dop().apply(phi)?.norm()),
            Self::Converse(cv) => cv.eval(system, phi),
            Self::Composite { terms } => {
                let mut total = 0.0;
                for (w, t) in terms {
                    total += w * t.eval(system, phi)?;
                }
                Ok(total)
            }
        }
    }
}

fn quadratic_integral<H: HistoryView + ?Sized>(phi: &H, grid: &[f64], q: &[Matrix]) -> f64 {
    kernel_quadrature(grid, phi.interp_order(), |s, idx| {
        let x = phi.eval(s);
        let v = match idx {
            Some(i) => x.dot(&(&q[i] * &x)),
            None => x.dot(&(kernel_at(grid, q, s) * &x)),
        };
        Vector::from_element(1, v)
    })[0]
}

/// Semi-norm `||.||_a` on histories.
#[derive(Clone, Debug, PartialEq)]
pub enum SemiNorm {
    /// `|D phi|`.
    Dop,
    /// `|phi(0)|`.
    Endpoint,
    /// `(int_{-delta}^0 |phi(s)|^2 ds)^{1/2}`.
    L2,
    Weighted(Vec<(f64, SemiNorm)>),
}

impl SemiNorm {
    pub fn eval(&self, system: &NfdeSystem, phi: &HistorySegment) -> Result<f64> {
        match self {
            Self::Dop => Ok(system.dop().apply(phi)?.norm()),
            Self::Endpoint => Ok(phi.head().norm()),
            Self::L2 => {
                let grid = phi.grid();
                let sq = kernel_quadrature(grid, phi.order(), |s, _| Vector::from_element(1, phi.eval(s).norm_squared()));
                Ok(sq[0].max(0.0).sqrt())
            }
            Self::Weighted(terms) => {
                let mut total = 0.0;
                for (w, t) in terms {
                    if !(*w >= 0.0) {
                        return Err(Error::Precondition("semi-norm weights must be nonnegative".into()));
                    }
                    total += w * t.eval(system, phi)?;
                }
                Ok(total)
            }
        }
    }

    /// A constant `a4` with `||phi||_a <= a4 ||phi||` for every `phi`.
    pub fn domination_bound(&self, system: &NfdeSystem) -> f64 {
        match self {
            Self::Dop => 1.0 + system.dop().coefficient_norm_sum(),
            Self::Endpoint => 1.0,
            Self::L2 => system.delta().sqrt(),
            Self::Weighted(terms) => terms.iter().map(|(w, t)| w * t.domination_bound(system)).sum(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dop => "dop",
            Self::Endpoint => "endpoint",
            Self::L2 => "l2",
            Self::Weighted(_) => "weighted",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn sys() -> NfdeSystem {
        NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0)]).unwrap()
    }

    #[test]
    fn quadratic_and_norm_kinds() {
        let s = sys();
        let one = HistorySegment::constant(1.0, dvector![1.0]).unwrap();
        assert_eq!(Functional::PointQuadratic { p: dmatrix![1.0] }.eval(&s, &one).unwrap(), 0.25);
        assert_eq!(Functional::DopNorm { c: 2.0 }.eval(&s, &one).unwrap(), 1.0);
        assert_eq!(Functional::SupNorm { c: 3.0 }.eval(&s, &one).unwrap(), 3.0);
        let iq = Functional::IntegralQuadratic {
            p: dmatrix![0.0],
            grid: vec![-1.0, -0.5, 0.0],
            q: vec![dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]],
        };
        assert!((iq.eval(&s, &one).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_weights() {
        let s = sys();
        assert!(Functional::PointQuadratic { p: dmatrix![-1.0] }.validate(&s).is_err());
        assert!(Functional::SupNorm { c: -1.0 }.validate(&s).is_err());
        let two = NfdeSystem::new(
            crate::DifferenceOperator::single(1.0, dmatrix![0.0, 0.0; 0.0, 0.0]).unwrap(),
            crate::RhsMap::zero(2),
        )
        .unwrap();
        assert!(Functional::PointQuadratic { p: dmatrix![1.0, 2.0; 0.0, 1.0] }.validate(&two).is_err());
    }

    #[test]
    fn converse_on_plain_decay_is_endpoint_norm() {
        let s = NfdeSystem::scalar(&[(1.0, 0.0)], &[(0.0, -1.0)]).unwrap();
        let cv = ConverseFunctional {
            rate: 0.5,
            horizon: 6.0,
            step: 1e-2,
        };
        let phi = HistorySegment::constant(1.0, dvector![-0.7]).unwrap();
        assert!((cv.eval(&s, &phi).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(cv.eval(&s, &HistorySegment::zero(1, 1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_values() {
        let s = sys();
        let phi = HistorySegment::constant(1.0, dvector![2.0]).unwrap();
        assert_eq!(SemiNorm::Dop.eval(&s, &phi).unwrap(), 1.0);
        assert_eq!(SemiNorm::Endpoint.eval(&s, &phi).unwrap(), 2.0);
        assert!((SemiNorm::L2.eval(&s, &phi).unwrap() - 2.0).abs() < 1e-15);
        assert!((SemiNorm::Dop.domination_bound(&s) - 1.5).abs() < 1e-15);
    }
}
