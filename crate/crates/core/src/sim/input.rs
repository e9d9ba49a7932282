use crate::error::{Error, Result};
use crate::Vector;

/// Input signal `u: [0, inf) -> R^m`, piecewise defined (hence measurable).
#[derive(Clone, Debug, PartialEq)]
pub enum InputSignal {
    Zero { m: usize },
    Constant { value: Vector },
    /// `values[0]` on `[0, switches[0])`, `values[k]` on
    /// `[switches[k-1], switches[k])`, the last value afterwards.
    PiecewiseConstant { switches: Vec<f64>, values: Vec<Vector> },
    /// `amplitude * sin(omega t + phase)`.
    Sinusoid { amplitude: Vector, omega: f64, phase: f64 },
    /// Piecewise-linear through `(times[k], values[k])`, held constant outside.
    Table { times: Vec<f64>, values: Vec<Vector> },
}

impl InputSignal {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vector| v.iter().all(|x| x.is_finite());
        match self {
            Self::Zero { .. } => Ok(()),
            Self::Constant { value } => {
                if !finite(value) {
                    return Err(Error::InvalidInput("non-finite constant input".into()));
                }
                Ok(())
            }
            Self::PiecewiseConstant { switches, values } => {
                if values.len() != switches.len() + 1 {
                    return Err(Error::InvalidInput(
                        "piecewise-constant input needs one more value than switch times".into(),
                    ));
                }
                if switches.iter().any(|&t| !(t > 0.0)) || switches.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("switch times must be positive and increasing".into()));
                }
                same_dims(values)
            }
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if !finite(amplitude) || !omega.is_finite() || !phase.is_finite() {
                    return Err(Error::InvalidInput("non-finite sinusoid parameter".into()));
                }
                Ok(())
            }
            Self::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidInput("table input needs matching times and values".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("table times must be increasing".into()));
                }
                same_dims(values)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { m } => *m,
            Self::Constant { value } => value.len(),
            Self::PiecewiseConstant { values, .. } | Self::Table { values, .. } => values[0].len(),
            Self::Sinusoid { amplitude, .. } => amplitude.len(),
        }
    }

    /// `u(t)` (right-continuous at switch times).
    pub fn value(&self, t: f64) -> Vector {
        match self {
            Self::Zero { m } => Vector::zeros(*m),
            Self::Constant { value } => value.clone(),
            Self::PiecewiseConstant { switches, values } => {
                values[switches.partition_point(|&s| s <= t)].clone()
            }
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            Self::Table { times, values } => table_value(times, values, t),
        }
    }

    /// Left limit `u(t-)`.
    pub fn value_left(&self, t: f64) -> Vector {
        match self {
            Self::PiecewiseConstant { switches, values } => {
                values[switches.partition_point(|&s| s < t)].clone()
            }
            _ => self.value(t),
        }
    }

    /// Times where `u` jumps or has a kink; these enter the integration mesh.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::PiecewiseConstant { switches, .. } => switches.clone(),
            Self::Table { times, .. } => times.iter().copied().filter(|&t| t > 0.0).collect(),
            _ => Vec::new(),
        }
    }

    /// `||u_[0,t)||`, the essential sup of `|u|` over `[0, t)`.
    pub fn sup_norm_until(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Zero { .. } => 0.0,
            Self::Constant { value } => value.norm(),
            Self::PiecewiseConstant { switches, values } => {
                let active = switches.partition_point(|&s| s < t);
                values[..=active].iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                let a = amplitude.norm();
                if *omega == 0.0 {
                    return a * phase.sin().abs();
                }
                // |sin| peaks where omega s + phase = pi/2 + k pi
                let (lo, hi) = {
                    let x0 = *phase;
                    let x1 = omega * t + phase;
                    (x0.min(x1), x0.max(x1))
                };
                let k = ((lo - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI).ceil();
                let peak = std::f64::consts::FRAC_PI_2 + k * std::f64::consts::PI;
                if peak <= hi {
                    a
                } else {
                    a * lo.sin().abs().max(hi.sin().abs())
                }
            }
            Self::Table { times, values } => {
                let mut m = table_value(times, values, 0.0).norm();
                m = m.max(table_value(times, values, t).norm());
                for (tk, v) in times.iter().zip(values) {
                    if *tk > 0.0 && *tk < t {
                        m = m.max(v.norm());
                    }
                }
                m
            }
        }
    }
}

fn same_dims(values: &[Vector]) -> Result<()> {
    let m = values[0].len();
    if values.iter().any(|v| v.len() != m) {
        return Err(Error::InvalidInput("input values of differing dimension".into()));
    }
    if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidInput("non-finite input value".into()));
    }
    Ok(())
}

fn table_value(times: &[f64], values: &[Vector], t: f64) -> Vector {
    let k = times.len();
    if t <= times[0] || k == 1 {
        return values[0].clone();
    }
    if t >= times[k - 1] {
        return values[k - 1].clone();
    }
    let i = times.partition_point(|&g| g <= t) - 1;
    let tau = (t - times[i]) / (times[i + 1] - times[i]);
    &values[i] * (1.0 - tau) + &values[i + 1] * tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn piecewise_constant_sides() {
        let u = InputSignal::PiecewiseConstant {
            switches: vec![1.0, 2.0],
            values: vec![dvector![1.0], dvector![-3.0], dvector![0.5]],
        };
        u.validate().unwrap();
        assert_eq!(u.value(1.0)[0], -3.0);
        assert_eq!(u.value_left(1.0)[0], 1.0);
        assert_eq!(u.sup_norm_until(1.0), 1.0);
        assert_eq!(u.sup_norm_until(1.5), 3.0);
        assert_eq!(u.sup_norm_until(0.0), 0.0);
    }

    #[test]
    fn sinusoid_sup() {
        let u = InputSignal::Sinusoid {
            amplitude: dvector![2.0],
            omega: 1.0,
            phase: 0.0,
        };
        assert!((u.sup_norm_until(0.5) - 2.0 * 0.5f64.sin()).abs() < 1e-15);
        assert_eq!(u.sup_norm_until(2.0), 2.0);
        // brute-force oracle
        for &t in &[0.3, 1.2, 1.7, 4.0, 5.5] {
            let brute = (0..=10000)
                .map(|k| u.value(t * k as f64 / 10000.0).norm())
                .fold(0.0, f64::max);
            assert!((u.sup_norm_until(t) - brute).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn table_interpolates() {
        let u = InputSignal::Table {
            times: vec![0.0, 1.0],
            values: vec![dvector![0.0], dvector![2.0]],
        };
        assert_eq!(u.value(0.5)[0], 1.0);
        assert_eq!(u.value(3.0)[0], 2.0);
        assert_eq!(u.sup_norm_until(0.5), 1.0);
    }

    #[test]
    fn invalid_signals() {
        assert!(InputSignal::PiecewiseConstant {
            switches: vec![1.0],
            values: vec![dvector![1.0]],
        }
        .validate()
        .is_err());
        assert!(InputSignal::Table {
            times: vec![1.0, 0.5],
            values: vec![dvector![1.0], dvector![1.0]],
        }
        .validate()
        .is_err());
    }
}
