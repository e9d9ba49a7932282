use std::collections::BTreeMap;

use super::verify::{evaluate_samples, report_from, CheckOptions, SampleEval};
use super::{CertificateConstants, CertificateReport};
use crate::comparison::{ComparisonFunction, FunctionClass, MonotoneTable, Profile};
use crate::error::{Error, Result};
use crate::lk::{Functional, SemiNorm};
use crate::sampling::Sample;
use crate::NfdeSystem;

#[derive(Clone, Debug, PartialEq)]
pub enum FitVariant {
    Gas,
    Ges,
    GesSeminorm(SemiNorm),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub check: CheckOptions,
    /// Relative safety margin: lower constants shrink by `1 - slack`, upper
    /// constants grow by `1 + slack`.
    pub slack: f64,
    pub min_per_shell: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            check: CheckOptions::default(),
            slack: 0.0,
            min_per_shell: 100,
        }
    }
}

fn impossible(msg: impl Into<String>) -> Error {
    Error::FitImpossible(msg.into())
}

fn check_shells(samples: &[Sample], min: usize) -> Result<()> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.shell.to_bits()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    if let Some((shell, n)) = counts.iter().find(|(_, &n)| n < min) {
        return Err(Error::Precondition(format!(
            "shell H = {} has {n} samples, at least {min} required",
            f64::from_bits(*shell)
        )));
    }
    Ok(())
}

/// Fits certificate constants to the sampled clouds, then checks them on the
/// same samples.
///
/// `a1 = min V/|D phi|`, `a2 = max V/||phi||` (or `/||phi||_a`),
/// `a3 = min -D+V/V` (or `/||phi||_a`) over samples whose derivative is
/// negative beyond its error band. The GAS variant fits piecewise-linear
/// envelopes of the same clouds.
pub fn fit_constants(
    system: &NfdeSystem,
    v: &Functional,
    variant: &FitVariant,
    samples: &[Sample],
    opts: &FitOptions,
) -> Result<(CertificateConstants, CertificateReport)> {
    check_shells(samples, opts.min_per_shell)?;
    if !(0.0..1.0).contains(&opts.slack) {
        return Err(Error::Precondition("slack must lie in [0, 1)".into()));
    }
    v.validate(system)?;
    let seminorm = match variant {
        FitVariant::GesSeminorm(s) => Some(s),
        _ => None,
    };
    let ladder = opts.check.ladder_for(system);
    let raw = evaluate_samples(system, v, samples, seminorm, &ladder);
    let mut evals = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        match r {
            Ok(e) => evals.push(e.clone()),
            Err(e) => return Err(impossible(format!("sample {i}: {e}"))),
        }
    }
    let constants = match variant {
        FitVariant::Gas => fit_gas(&evals, opts.slack)?,
        FitVariant::Ges => {
            let (a1, a2, a3) = fit_exponential(&evals, |e| e.norm, |e| e.v, opts.slack)?;
            CertificateConstants::Ges { a1, a2, a3 }
        }
        FitVariant::GesSeminorm(_) => {
            let semi = |e: &SampleEval| e.semi.unwrap_or(0.0);
            let (a1, a2, a3) = fit_exponential(&evals, semi, semi, opts.slack)?;
            let a4 = evals
                .iter()
                .filter(|e| e.norm > 0.0)
                .map(|e| semi(e) / e.norm)
                .fold(0.0, f64::max)
                * (1.0 + opts.slack);
            if !(a4 > 0.0) {
                return Err(impossible("semi-norm vanishes on every sample"));
            }
            CertificateConstants::GesSeminorm { a1, a2, a3, a4 }
        }
    };
    let report = report_from(system, &constants, samples, &raw, &opts.check)?;
    Ok((constants, report))
}

/// `(a1, a2, a3)`; `upper_scale` is the right-hand norm of condition i and
/// `decay_scale` the quantity multiplying `a3` in condition ii.
fn fit_exponential<U, D>(evals: &[SampleEval], upper_scale: U, decay_scale: D, slack: f64) -> Result<(f64, f64, f64)>
where
    U: Fn(&SampleEval) -> f64,
    D: Fn(&SampleEval) -> f64,
{
    let mut a1 = f64::INFINITY;
    let mut a2: f64 = 0.0;
    let mut a3 = f64::INFINITY;
    for (i, e) in evals.iter().enumerate() {
        if e.dop_norm > 0.0 {
            a1 = a1.min(e.v / e.dop_norm);
        }
        let u = upper_scale(e);
        if u > 0.0 {
            a2 = a2.max(e.v / u);
        } else if e.v > 0.0 {
            return Err(impossible(format!("sample {i}: V > 0 where the upper-bound norm vanishes")));
        }
        let s = decay_scale(e);
        let d = &e.deriv;
        if s > 0.0 {
            if d.value - d.error_band > 0.0 {
                return Err(impossible(format!(
                    "sample {i}: D+V = {} is positive beyond its band",
                    d.value
                )));
            }
            if d.value + d.error_band < 0.0 {
                a3 = a3.min(-d.value / s);
            }
        }
    }
    if !(a1 > 0.0) || !a1.is_finite() {
        return Err(impossible("V vanishes where D phi does not (no positive a1)"));
    }
    if !(a2 > 0.0) {
        return Err(impossible("V vanishes on every sample (no positive a2)"));
    }
    if !a3.is_finite() || !(a3 > 0.0) {
        return Err(impossible("no sample with a definitely negative derivative (no positive a3)"));
    }
    Ok((a1 * (1.0 - slack), a2 * (1.0 + slack), a3 * (1.0 - slack)))
}

fn fit_gas(evals: &[SampleEval], slack: f64) -> Result<CertificateConstants> {
    let lower: Vec<(f64, f64)> = evals.iter().map(|e| (e.dop_norm, e.v)).collect();
    let upper: Vec<(f64, f64)> = evals.iter().map(|e| (e.norm, e.v)).collect();
    let mut decay = Vec::new();
    for (i, e) in evals.iter().enumerate() {
        let d = &e.deriv;
        if e.dop_norm > 0.0 && d.value - d.error_band > 0.0 {
            return Err(impossible(format!("sample {i}: D+V = {} is positive beyond its band", d.value)));
        }
        if d.value + d.error_band < 0.0 {
            decay.push((e.dop_norm, -d.value));
        }
    }
    let table = |pts: &[(f64, f64)], lower: bool| -> Result<MonotoneTable> {
        let t = if lower {
            MonotoneTable::lower_envelope(pts)
        } else {
            MonotoneTable::upper_envelope(pts)
        };
        t.map_err(|e| impossible(e.to_string()))
    };
    let alpha1 = table(&lower, true)?.scaled(1.0 - slack);
    let alpha2 = table(&upper, false)?.scaled(1.0 + slack);
    if decay.is_empty() {
        return Err(impossible("no sample with a definitely negative derivative"));
    }
    let alpha3 = table(&decay, true)?.scaled(1.0 - slack);
    Ok(CertificateConstants::Gas {
        alpha1: ComparisonFunction::new(FunctionClass::KInf, Profile::Table(alpha1))?,
        alpha2: ComparisonFunction::new(FunctionClass::KInf, Profile::Table(alpha2))?,
        alpha3: ComparisonFunction::new(FunctionClass::K, Profile::Table(alpha3))?,
    })
}
