use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ges::{estimate_ges, GesOptions, GesOutcome};
use crate::comparison::{ComparisonFunction, FunctionClass, MonotoneTable, Profile};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, sample_ball, sample_history, Sample};
use crate::sim::{integrate, InputSignal, StepPolicy, Trajectory};
use crate::{HistorySegment, NfdeSystem};

/// Sampled Lipschitz data of `f`: `|f(phi, 0) - f(psi, 0)| <= l0 ||phi - psi||`
/// and `|f(phi, u) - f(phi, 0)| <= L(|u|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzEstimate {
    pub l0: f64,
    /// Upper envelope of the input increments; `None` when they all vanish.
    pub l_fn: Option<ComparisonFunction>,
    /// Largest `|f(phi, u) - f(phi, 0)| / |u|`.
    pub l_slope: f64,
    pub pairs: usize,
    pub input_points: usize,
}

/// Samples `pairs` history pairs on `C_H` and as many inputs with
/// `|u| <= delta`. The input increment is independent of `phi`, so it is
/// evaluated from the input terms directly.
pub fn estimate_lipschitz(
    system: &NfdeSystem,
    bound: f64,
    delta: f64,
    pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if !(bound > 0.0) {
        return Err(Error::Precondition("H must be positive".into()));
    }
    if pairs == 0 {
        return Err(Error::Precondition("at least one pair required".into()));
    }
    let n = system.dim();
    let m = system.input_dim();
    let d = system.delta();
    let rhs = system.rhs();
    let l0 = (0..pairs)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let (sa, sb) = (derive_seed(seed, 2 * k as u64), derive_seed(seed, 2 * k as u64 + 1));
            let (a, b) = if k % 4 == 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(sa);
                (
                    HistorySegment::constant(d, sample_ball(&mut rng, n, bound))?,
                    HistorySegment::constant(d, sample_ball(&mut rng, n, bound))?,
                )
            } else if k % 4 == 1 {
                (sample_history(n, d, bound, 3, sa)?, HistorySegment::zero(n, d)?)
            } else {
                (sample_history(n, d, bound, 3, sa)?, sample_history(n, d, bound, 3, sb)?)
            };
            let dist = a.sup_distance(&b);
            if dist == 0.0 {
                return Ok(0.0);
            }
            Ok((rhs.eval(&a, None)? - rhs.eval(&b, None)?).norm() / dist)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut points = Vec::new();
    if m > 0 && delta > 0.0 {
        points = (0..pairs)
            .into_par_iter()
            .map(|k| -> Result<(f64, f64)> {
                let s = derive_seed(seed ^ 0x5555_5555_5555_5555, k as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let u = sample_ball(&mut rng, m, delta);
                Ok((u.norm(), rhs.input_increment(&u)?.norm()))
            })
            .collect::<Result<_>>()?;
    }
    let l_slope = points
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1 / p.0)
        .fold(0.0, f64::max);
    let l_fn = if points.iter().any(|p| p.0 > 0.0 && p.1 > 0.0) {
        let t = MonotoneTable::upper_envelope(&points)?;
        Some(ComparisonFunction::new(FunctionClass::KInf, Profile::Table(t))?)
    } else {
        None
    };
    Ok(LipschitzEstimate {
        l0,
        l_fn,
        l_slope,
        pairs,
        input_points: points.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IssOptions {
    pub ges: GesOptions,
    pub lipschitz_pairs: usize,
    pub seed: u64,
    /// Absolute slack when counting violations of the fitted bound.
    pub tol: f64,
}

impl Default for IssOptions {
    fn default() -> Self {
        Self {
            ges: GesOptions::default(),
            lipschitz_pairs: 200,
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// Fitted `|x(t)| <= beta(||xi0||, t) + gamma(||u_[0,t)||)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IssEstimate {
    pub beta: ComparisonFunction,
    pub m_hat: f64,
    pub lambda_hat: f64,
    pub gamma: ComparisonFunction,
    /// `"linear"` (`c s`) or `"power"` (`c s^q`).
    pub gamma_family: &'static str,
    pub gamma_gain: f64,
    pub gamma_exponent: f64,
    /// Probe nodes exceeding the fitted bound.
    pub violations: usize,
    pub probes: usize,
    pub lipschitz: LipschitzEstimate,
}

#[derive(Clone, Debug)]
pub enum IssOutcome {
    Iss(IssEstimate),
    NotIss {
        reason: String,
        xi_index: usize,
        input_index: Option<usize>,
        history: HistorySegment,
        input: Option<InputSignal>,
    },
}

/// `(|x(t)|, ||xi0||, ||u_[0,t)||, t)` on every mesh node of one probe.
struct ProbeData {
    nodes: Vec<(f64, f64, f64, f64)>,
}

fn probe_data(tr: &Trajectory, xi_norm: f64, u: &InputSignal) -> ProbeData {
    let nodes = tr
        .times()
        .iter()
        .zip(tr.states())
        .map(|(&t, x)| (x.norm(), xi_norm, u.sup_norm_until(t), t))
        .collect();
    ProbeData { nodes }
}

const POWER_EXPONENTS: [f64; 10] = [0.5, 0.75, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0];

/// Empirical ISS check: fits `beta` from the zero-input runs, then the
/// smallest gain of a linear (else power) `gamma` covering every probe.
pub fn iss_probe(
    system: &NfdeSystem,
    xi: &[Sample],
    inputs: &[InputSignal],
    horizon: f64,
    opts: &IssOptions,
) -> Result<IssOutcome> {
    if system.input_dim() == 0 {
        return Err(Error::Precondition("system has no input channel".into()));
    }
    if inputs.is_empty() {
        return Err(Error::Precondition("no input probes".into()));
    }
    let ges = match estimate_ges(system, xi, horizon, &opts.ges)? {
        GesOutcome::Ges(g) => g,
        GesOutcome::NotGes {
            reason,
            sample_index,
            sample,
            ..
        } => {
            return Ok(IssOutcome::NotIss {
                reason: format!("zero-input system is not exponentially stable: {reason}"),
                xi_index: sample_index,
                input_index: None,
                history: sample.history,
                input: None,
            })
        }
    };
    let beta = ComparisonFunction::exponential_kl(ges.m_hat, ges.lambda_hat)?;
    let policy = StepPolicy::fixed(opts.ges.step);
    let jobs: Vec<(usize, usize)> = (0..xi.len()).flat_map(|i| (0..inputs.len()).map(move |j| (i, j))).collect();
    let runs: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(i, j)| integrate(system, &xi[i].history, horizon, &policy, Some(&inputs[j])))
        .collect::<Result<_>>()?;
    if let Some(k) = runs.iter().position(|r| r.blowup()) {
        let (i, j) = jobs[k];
        return Ok(IssOutcome::NotIss {
            reason: format!("bounded input drove the solution past the blowup bound at t = {}", runs[k].t_end()),
            xi_index: i,
            input_index: Some(j),
            history: xi[i].history.clone(),
            input: Some(inputs[j].clone()),
        });
    }
    let data: Vec<ProbeData> = jobs
        .iter()
        .zip(&runs)
        .map(|(&(i, j), r)| probe_data(r, xi[i].history.sup_norm(), &inputs[j]))
        .collect();
    let excess = |x: f64, s: f64, t: f64| x - beta.eval2(s, t);
    // smallest c with excess <= c s^q on every node with s_u > 0
    let gain_for = |q: f64| -> f64 {
        let mut c: f64 = 0.0;
        for p in &data {
            for &(x, s, su, t) in &p.nodes {
                if su > 0.0 {
                    c = c.max(excess(x, s, t) / su.powf(q));
                }
            }
        }
        c
    };
    let violations_for = |gamma: &dyn Fn(f64) -> f64| -> usize {
        data.iter()
            .flat_map(|p| p.nodes.iter())
            .filter(|&&(x, s, su, t)| x > beta.eval2(s, t) + gamma(su) + opts.tol)
            .count()
    };
    let c_lin = gain_for(1.0);
    let (family, gain, exponent) = if c_lin.is_finite() {
        ("linear", c_lin, 1.0)
    } else {
        let mut best: Option<(f64, f64, usize)> = None;
        for &q in &POWER_EXPONENTS {
            let c = gain_for(q);
            if !c.is_finite() {
                continue;
            }
            let v = violations_for(&|s: f64| c * s.powf(q));
            if best.is_none_or(|(bc, _, bv)| (c, v) < (bc, bv)) {
                best = Some((c, q, v));
            }
        }
        match best {
            Some((c, q, _)) => ("power", c, q),
            None => return Err(Error::FitImpossible("no linear or power gain covers the probes".into())),
        }
    };
    // class K needs a positive gain even when the input never mattered
    let gain = gain.max(f64::MIN_POSITIVE);
    let gamma = if family == "linear" {
        ComparisonFunction::linear(gain)?
    } else {
        ComparisonFunction::power(gain, exponent)?
    };
    let violations = violations_for(&|s| gamma.eval(s));
    let h = xi.iter().map(|s| s.history.sup_norm()).fold(0.0, f64::max);
    let delta = inputs.iter().map(|u| u.sup_norm_until(horizon)).fold(0.0, f64::max);
    let lipschitz = estimate_lipschitz(system, h.max(f64::MIN_POSITIVE), delta, opts.lipschitz_pairs, opts.seed)?;
    Ok(IssOutcome::Iss(IssEstimate {
        beta,
        m_hat: ges.m_hat,
        lambda_hat: ges.lambda_hat,
        gamma,
        gamma_family: family,
        gamma_gain: gain,
        gamma_exponent: exponent,
        violations,
        probes: runs.len(),
        lipschitz,
    }))
}
