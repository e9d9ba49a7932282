use std::collections::VecDeque;

use rayon::prelude::*;

use super::Verdict;
use crate::error::{Error, Result};
use crate::lk::{ConverseFunctional, Functional};
use crate::sampling::Sample;
use crate::sim::{integrate, StepPolicy, Trajectory};
use crate::NfdeSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct GesOptions {
    pub step: f64,
    /// Envelope window `W` as a fraction of the horizon.
    pub window_fraction: f64,
    pub min_samples: usize,
}

impl Default for GesOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            window_fraction: 0.25,
            min_samples: 20,
        }
    }
}

/// Fitted `|x(t)| <= M e^{-lambda t} ||xi0||`.
#[derive(Clone, Debug, PartialEq)]
pub struct GesEstimate {
    pub m_hat: f64,
    pub lambda_hat: f64,
    /// Largest RMS residual of the per-run log-envelope regressions.
    pub fit_residual: f64,
    pub trajectories: usize,
    /// Runs skipped because the solution vanished identically.
    pub skipped: usize,
    /// Per-run decay rates (NaN for skipped runs).
    pub rates: Vec<f64>,
    pub horizon: f64,
    /// Mesh nodes exceeding the fitted bound (zero by construction of `M`).
    pub bound_violations: usize,
}

#[derive(Clone, Debug)]
pub enum GesOutcome {
    Ges(GesEstimate),
    NotGes {
        reason: String,
        sample_index: usize,
        sample: Sample,
        t_end: f64,
        blowup: bool,
    },
}

impl GesOutcome {
    pub fn estimate(&self) -> Option<&GesEstimate> {
        match self {
            Self::Ges(g) => Some(g),
            Self::NotGes { .. } => None,
        }
    }
}

/// `E(t_i) = max |x|` over nodes in `[t_i, t_i + w]`, for every node.
fn window_max(ts: &[f64], ns: &[f64], w: f64) -> Vec<f64> {
    let mut out = vec![0.0; ts.len()];
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut j = ts.len();
    for i in (0..ts.len()).rev() {
        // extend the window to the left: push i, drop nodes beyond t_i + w
        while let Some(&b) = dq.back() {
            if ns[b] <= ns[i] {
                dq.pop_back();
            } else {
                break;
            }
        }
        dq.push_back(i);
        while j > i && ts[j - 1] > ts[i] + w * (1.0 + 1e-12) {
            j -= 1;
        }
        while let Some(&f) = dq.front() {
            if f >= j {
                dq.pop_front();
            } else {
                break;
            }
        }
        out[i] = ns[*dq.front().unwrap()];
    }
    out
}

/// Least-squares slope and RMS residual of `y` against `x`.
fn regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum();
    (slope, (rss / n).sqrt())
}

/// Decay rate of one run from its log-envelope on `[T/2, T - W]`.
fn run_rate(tr: &Trajectory, w: f64) -> Option<(f64, f64)> {
    let ts = tr.times();
    let ns: Vec<f64> = tr.states().iter().map(|x| x.norm()).collect();
    if ns.iter().all(|&v| v == 0.0) {
        return None;
    }
    let env = window_max(ts, &ns, w);
    let t_end = tr.t_end();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&env)
        .filter(|(&t, &e)| t >= 0.5 * t_end && t <= t_end - w && e > 0.0)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    if xs.len() < 2 {
        // vanished before the fitting window: faster than any rate we can resolve
        return Some((f64::INFINITY, 0.0));
    }
    let (slope, res) = regression(&xs, &ys);
    Some((-slope, res))
}

/// Estimates `(M, lambda)` from trajectories started at the samples.
pub fn estimate_ges(system: &NfdeSystem, samples: &[Sample], horizon: f64, opts: &GesOptions) -> Result<GesOutcome> {
    if samples.len() < opts.min_samples {
        return Err(Error::Precondition(format!(
            "at least {} initial histories required, got {}",
            opts.min_samples,
            samples.len()
        )));
    }
    if !(opts.window_fraction > 0.0 && opts.window_fraction < 0.5) {
        return Err(Error::Precondition("window fraction must lie in (0, 1/2)".into()));
    }
    let policy = StepPolicy::fixed(opts.step);
    let runs: Vec<Trajectory> = samples
        .par_iter()
        .map(|s| integrate(system, &s.history, horizon, &policy, None))
        .collect::<Result<_>>()?;
    if let Some(i) = runs.iter().position(|r| r.blowup()) {
        return Ok(GesOutcome::NotGes {
            reason: format!("solution escaped the blowup bound at t = {}", runs[i].t_end()),
            sample_index: i,
            sample: samples[i].clone(),
            t_end: runs[i].t_end(),
            blowup: true,
        });
    }
    let w = opts.window_fraction * horizon;
    let fits: Vec<Option<(f64, f64)>> = runs.par_iter().map(|r| run_rate(r, w)).collect();
    let mut lambda = f64::INFINITY;
    let mut worst = None;
    let mut residual: f64 = 0.0;
    for (i, f) in fits.iter().enumerate() {
        if let Some((rate, res)) = f {
            if *rate < lambda {
                lambda = *rate;
                worst = Some(i);
            }
            residual = residual.max(*res);
        }
    }
    let Some(worst) = worst else {
        return Err(Error::Precondition("every sampled solution vanishes identically".into()));
    };
    if !(lambda > 0.0) {
        return Ok(GesOutcome::NotGes {
            reason: format!("log-envelope slope {:.6e} shows no exponential decay", -lambda),
            sample_index: worst,
            sample: samples[worst].clone(),
            t_end: runs[worst].t_end(),
            blowup: false,
        });
    }
    if !lambda.is_finite() {
        return Err(Error::Precondition(
            "every solution vanished before the fitting window; lengthen nothing, shorten the horizon".into(),
        ));
    }
    let mut m_hat: f64 = 1.0;
    for (s, r) in samples.iter().zip(&runs) {
        let norm0 = s.history.sup_norm();
        if norm0 == 0.0 {
            continue;
        }
        for (&t, x) in r.times().iter().zip(r.states()) {
            m_hat = m_hat.max(x.norm() * (lambda * t).exp() / norm0);
        }
    }
    let mut violations = 0;
    for (s, r) in samples.iter().zip(&runs) {
        let norm0 = s.history.sup_norm();
        for (&t, x) in r.times().iter().zip(r.states()) {
            if x.norm() > m_hat * (-lambda * t).exp() * norm0 * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    Ok(GesOutcome::Ges(GesEstimate {
        m_hat,
        lambda_hat: lambda,
        fit_residual: residual,
        trajectories: runs.len(),
        skipped: fits.iter().filter(|f| f.is_none()).count(),
        rates: fits.iter().map(|f| f.map_or(f64::NAN, |p| p.0)).collect(),
        horizon,
        bound_violations: violations,
    }))
}

#[derive(Clone, Debug)]
pub struct AttractionReport {
    pub verdict: Verdict,
    /// Smallest mesh time after which every sample stays below `eps`.
    pub t_hat: Option<f64>,
    /// Largest tested `delta` whose scaled samples stay below `eps` throughout.
    pub delta_hat: Option<f64>,
    pub samples: usize,
    /// Sample that failed to settle (largest final-window norm).
    pub worst_index: Option<usize>,
    pub worst_sample: Option<Sample>,
    pub worst_final_norm: f64,
}

/// Number of halvings of `H` tried for the `delta(eps)` probe.
const DELTA_HALVINGS: i32 = 10;

/// Uniform attraction probe on `C_H`.
///
/// A sample counts as settled when `|x| < eps` holds on the last delay window
/// before `t_max`; its settling time is the mesh node after its last
/// excursion `|x| >= eps`.
pub fn check_uniform_attraction(
    system: &NfdeSystem,
    bound: f64,
    eps: f64,
    samples: &[Sample],
    t_max: f64,
    opts: &GesOptions,
) -> Result<AttractionReport> {
    if !(bound > 0.0) || !(eps > 0.0) {
        return Err(Error::Precondition("H and eps must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    let policy = StepPolicy::fixed(opts.step);
    let runs: Vec<Trajectory> = samples
        .par_iter()
        .map(|s| integrate(system, &s.history, t_max, &policy, None))
        .collect::<Result<_>>()?;
    let window_start = t_max - system.delta();
    let mut t_hat: f64 = 0.0;
    let mut worst: Option<(usize, f64)> = None;
    for (i, r) in runs.iter().enumerate() {
        let ts = r.times();
        let ns: Vec<f64> = r.states().iter().map(|x| x.norm()).collect();
        let final_norm = ts
            .iter()
            .zip(&ns)
            .filter(|(&t, _)| t >= window_start)
            .map(|(_, &n)| n)
            .fold(0.0, f64::max);
        let last = ns.iter().rposition(|&n| n >= eps);
        let settled = !r.blowup() && last.is_none_or(|j| ts[j] < window_start);
        if !settled {
            let score = if r.blowup() { f64::INFINITY } else { final_norm };
            if worst.is_none_or(|(_, s)| score > s) {
                worst = Some((i, score));
            }
            continue;
        }
        if let Some(j) = last {
            t_hat = t_hat.max(ts[j + 1]);
        }
    }
    let mut delta_hat = None;
    for k in 0..=DELTA_HALVINGS {
        let delta = bound * 0.5f64.powi(k);
        let all_below = samples
            .par_iter()
            .map(|s| {
                let scaled = s.history.scaled(delta / bound);
                let r = integrate(system, &scaled, t_max, &policy, None)?;
                Ok(!r.blowup() && r.states().iter().all(|x| x.norm() < eps))
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        if all_below {
            delta_hat = Some(delta);
            break;
        }
    }
    Ok(match worst {
        None => AttractionReport {
            verdict: Verdict::Pass,
            t_hat: Some(t_hat),
            delta_hat,
            samples: samples.len(),
            worst_index: None,
            worst_sample: None,
            worst_final_norm: 0.0,
        },
        Some((i, score)) => AttractionReport {
            verdict: Verdict::Inconclusive,
            t_hat: None,
            delta_hat,
            samples: samples.len(),
            worst_index: Some(i),
            worst_sample: Some(samples[i].clone()),
            worst_final_norm: score,
        },
    })
}

/// Shortest horizon allowed for the converse witness: `(ln M + 2) / (lambda - a)`.
pub fn converse_horizon(ges: &GesEstimate, rate: f64) -> f64 {
    (ges.m_hat.ln() + 2.0) / (ges.lambda_hat - rate)
}

/// Converse functional `V(phi) = sup_{t in [0, T]} |D x_t(phi)| e^{a t}`.
pub fn construct_converse_ges(
    system: &NfdeSystem,
    rate: f64,
    horizon: f64,
    ges: &GesEstimate,
    step: f64,
) -> Result<Functional> {
    if !(rate > 0.0 && rate < ges.lambda_hat) {
        return Err(Error::Precondition(format!(
            "rate a = {rate} must lie in (0, lambda = {})",
            ges.lambda_hat
        )));
    }
    let required = converse_horizon(ges, rate);
    if !(horizon >= required) {
        return Err(Error::Precondition(format!(
            "horizon {horizon} is below the margin rule (ln M + 2) / (lambda - a) = {required}"
        )));
    }
    let v = Functional::Converse(ConverseFunctional { rate, horizon, step });
    v.validate(system)?;
    Ok(v)
}
