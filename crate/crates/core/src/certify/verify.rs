use rayon::prelude::*;

use super::{CertificateConstants, CertificateReport, Condition, ConditionTally, Counterexample, Verdict};
use crate::error::{Error, Result};
use crate::lk::{driver_derivative, DerivativeEstimate, Functional, Ladder, SemiNorm};
use crate::sampling::Sample;
use crate::{HistorySegment, NfdeSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    /// Derivative ladder; `None` uses [`Ladder::default_for`].
    pub ladder: Option<Ladder>,
    /// Relative slack for rounding in the inequalities.
    pub value_tol: f64,
    /// Counterexamples kept in the report.
    pub max_counterexamples: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            ladder: None,
            value_tol: 1e-12,
            max_counterexamples: 16,
        }
    }
}

impl CheckOptions {
    pub(crate) fn ladder_for(&self, system: &NfdeSystem) -> Ladder {
        self.ladder.clone().unwrap_or_else(|| Ladder::default_for(system))
    }
}

/// Everything the conditions need about one sample.
#[derive(Clone, Debug)]
pub(crate) struct SampleEval {
    pub v: f64,
    pub dop_norm: f64,
    pub norm: f64,
    pub semi: Option<f64>,
    pub deriv: DerivativeEstimate,
}

pub(crate) fn evaluate_one(
    system: &NfdeSystem,
    v: &Functional,
    phi: &HistorySegment,
    seminorm: Option<&SemiNorm>,
    ladder: &Ladder,
) -> Result<SampleEval> {
    Ok(SampleEval {
        v: v.eval(system, phi)?,
        dop_norm: system.dop().apply(phi)?.norm(),
        norm: phi.sup_norm(),
        semi: seminorm.map(|s| s.eval(system, phi)).transpose()?,
        deriv: driver_derivative(system, v, phi, None, ladder)?,
    })
}

pub(crate) fn evaluate_samples(
    system: &NfdeSystem,
    v: &Functional,
    samples: &[Sample],
    seminorm: Option<&SemiNorm>,
    ladder: &Ladder,
) -> Vec<Result<SampleEval>> {
    samples
        .par_iter()
        .map(|s| evaluate_one(system, v, &s.history, seminorm, ladder))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Holds,
    Violated,
    Inconclusive,
}

/// `lhs <= rhs` with relative slack; for the decrease condition a violation
/// must exceed the derivative error band.
pub(crate) fn judge(lhs: f64, rhs: f64, band: f64, tol: f64) -> Outcome {
    let slack = tol * lhs.abs().max(rhs.abs());
    if lhs <= rhs + slack {
        Outcome::Holds
    } else if lhs - band > rhs + slack {
        Outcome::Violated
    } else {
        Outcome::Inconclusive
    }
}

pub(crate) fn conditions_of(constants: &CertificateConstants) -> Vec<Condition> {
    let mut c = vec![Condition::LowerBound, Condition::UpperBound, Condition::Decrease];
    if matches!(constants, CertificateConstants::GesSeminorm { .. }) {
        c.push(Condition::Domination);
    }
    c
}

/// `(lhs, rhs, band)` of one condition for one sample.
pub(crate) fn terms(constants: &CertificateConstants, cond: Condition, e: &SampleEval) -> Result<(f64, f64, f64)> {
    let d = &e.deriv;
    let semi = || {
        e.semi
            .ok_or_else(|| Error::Precondition("semi-norm variant evaluated without a semi-norm".into()))
    };
    Ok(match (constants, cond) {
        (CertificateConstants::Gas { alpha1, .. }, Condition::LowerBound) => (alpha1.eval(e.dop_norm), e.v, 0.0),
        (CertificateConstants::Gas { alpha2, .. }, Condition::UpperBound) => (e.v, alpha2.eval(e.norm), 0.0),
        (CertificateConstants::Gas { alpha3, .. }, Condition::Decrease) => {
            (d.value, -alpha3.eval(e.dop_norm), d.error_band)
        }
        (CertificateConstants::Ges { a1, .. }, Condition::LowerBound)
        | (CertificateConstants::GesSeminorm { a1, .. }, Condition::LowerBound) => (a1 * e.dop_norm, e.v, 0.0),
        (CertificateConstants::Ges { a2, .. }, Condition::UpperBound) => (e.v, a2 * e.norm, 0.0),
        (CertificateConstants::Ges { a3, .. }, Condition::Decrease) => (d.value, -a3 * e.v, d.error_band),
        (CertificateConstants::GesSeminorm { a2, .. }, Condition::UpperBound) => (e.v, a2 * semi()?, 0.0),
        (CertificateConstants::GesSeminorm { a3, .. }, Condition::Decrease) => {
            (d.value, -a3 * semi()?, d.error_band)
        }
        (CertificateConstants::GesSeminorm { a4, .. }, Condition::Domination) => (semi()?, a4 * e.norm, 0.0),
        _ => {
            return Err(Error::Precondition(format!(
                "condition {} does not apply to the {} variant",
                cond.as_str(),
                constants.variant()
            )))
        }
    })
}

pub(crate) fn run_checks(
    system: &NfdeSystem,
    v: &Functional,
    constants: &CertificateConstants,
    seminorm: Option<&SemiNorm>,
    samples: &[Sample],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    constants.validate()?;
    v.validate(system)?;
    let ladder = opts.ladder_for(system);
    let evals = evaluate_samples(system, v, samples, seminorm, &ladder);
    report_from(system, constants, samples, &evals, opts)
}

pub(crate) fn report_from(
    _system: &NfdeSystem,
    constants: &CertificateConstants,
    samples: &[Sample],
    evals: &[Result<SampleEval>],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    let conds = conditions_of(constants);
    let mut tallies: Vec<ConditionTally> = conds.iter().map(|&c| ConditionTally::new(c)).collect();
    let mut counterexamples = Vec::new();
    let mut failures = 0;
    for (i, (sample, eval)) in samples.iter().zip(evals).enumerate() {
        let e = match eval {
            Ok(e) => e,
            Err(Error::Evaluation(_)) => {
                failures += 1;
                continue;
            }
            Err(err) => return Err(clone_error(err)),
        };
        for (tally, &cond) in tallies.iter_mut().zip(&conds) {
            let (lhs, rhs, band) = terms(constants, cond, e)?;
            tally.checked += 1;
            tally.worst_margin = tally.worst_margin.min(rhs - lhs);
            match judge(lhs, rhs, band, opts.value_tol) {
                Outcome::Holds => {}
                Outcome::Inconclusive => tally.inconclusive += 1,
                Outcome::Violated => {
                    tally.violations += 1;
                    if counterexamples.len() < opts.max_counterexamples {
                        counterexamples.push(Counterexample {
                            condition: cond,
                            sample_index: i,
                            seed: Some(sample.seed),
                            shell: Some(sample.shell),
                            lhs,
                            rhs,
                            error_band: band,
                            history: sample.history.clone(),
                        });
                    }
                }
            }
        }
    }
    let lipschitz_estimate = match constants {
        CertificateConstants::Gas { .. } => None,
        _ => lipschitz_quotient(samples, evals),
    };
    let mut report = CertificateReport {
        variant: constants.variant().to_string(),
        samples: samples.len(),
        conditions: tallies,
        counterexamples,
        evaluation_failures: failures,
        constants: Some(constants.clone()),
        lipschitz_estimate,
        verdict: Verdict::Pass,
    };
    report.finish();
    Ok(report)
}

fn clone_error(e: &Error) -> Error {
    Error::Evaluation(e.to_string())
}

/// Max of `|V(a) - V(b)| / ||a - b||` over consecutive sample pairs.
fn lipschitz_quotient(samples: &[Sample], evals: &[Result<SampleEval>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for k in 1..samples.len() {
        if let (Ok(a), Ok(b)) = (&evals[k - 1], &evals[k]) {
            let d = samples[k - 1].history.sup_distance(&samples[k].history);
            if d > 0.0 {
                let q = (a.v - b.v).abs() / d;
                best = Some(best.map_or(q, |m: f64| m.max(q)));
            }
        }
    }
    best
}

fn expect_variant(constants: &CertificateConstants, variant: &str) -> Result<()> {
    if constants.variant() != variant {
        return Err(Error::Precondition(format!(
            "expected {variant} constants, got {}",
            constants.variant()
        )));
    }
    Ok(())
}

/// Checks `alpha1(|D phi|) <= V(phi) <= alpha2(||phi||)` and
/// `D+V(phi) <= -alpha3(|D phi|)` on every sample.
pub fn verify_gas_conditions(
    system: &NfdeSystem,
    v: &Functional,
    constants: &CertificateConstants,
    samples: &[Sample],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    expect_variant(constants, "gas")?;
    run_checks(system, v, constants, None, samples, opts)
}

/// Checks `a1 |D phi| <= V(phi) <= a2 ||phi||` and `D+V(phi) <= -a3 V(phi)`,
/// and reports a sampled Lipschitz constant of `V`.
pub fn verify_ges_conditions(
    system: &NfdeSystem,
    v: &Functional,
    constants: &CertificateConstants,
    samples: &[Sample],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    expect_variant(constants, "ges")?;
    run_checks(system, v, constants, None, samples, opts)
}

/// Semi-norm variant: `V <= a2 ||phi||_a`, `D+V <= -a3 ||phi||_a` and
/// `||phi||_a <= a4 ||phi||`.
pub fn verify_ges_seminorm(
    system: &NfdeSystem,
    v: &Functional,
    seminorm: &SemiNorm,
    constants: &CertificateConstants,
    samples: &[Sample],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    expect_variant(constants, "ges-seminorm")?;
    run_checks(system, v, constants, Some(seminorm), samples, opts)
}

impl Counterexample {
    /// Re-evaluates the violated condition on the stored history.
    pub fn recheck(
        &self,
        system: &NfdeSystem,
        v: &Functional,
        constants: &CertificateConstants,
        seminorm: Option<&SemiNorm>,
        opts: &CheckOptions,
    ) -> Result<bool> {
        let e = evaluate_one(system, v, &self.history, seminorm, &opts.ladder_for(system))?;
        let (lhs, rhs, band) = terms(constants, self.condition, &e)?;
        Ok(judge(lhs, rhs, band, opts.value_tol) == Outcome::Violated)
    }
}
