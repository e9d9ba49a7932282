//! Certificate checking, constant fitting, empirical stability estimates,
//! the converse witness and the ISS probe.
//!
//! All checks are sample based: a pass means no sampled history falsified
//! the conditions, not a proof that they hold on all of `C`.

mod fit;
mod ges;
mod iss;
mod verify;

pub use fit::{fit_constants, FitOptions, FitVariant};
pub use ges::{
    check_uniform_attraction, construct_converse_ges, converse_horizon, estimate_ges, AttractionReport, GesEstimate,
    GesOptions, GesOutcome,
};
pub use iss::{estimate_lipschitz, iss_probe, IssEstimate, IssOptions, IssOutcome, LipschitzEstimate};
pub use verify::{verify_gas_conditions, verify_ges_conditions, verify_ges_seminorm, CheckOptions};

use crate::comparison::{ComparisonFunction, FunctionClass};
use crate::error::{Error, Result};
use crate::HistorySegment;

/// Constants of a certificate.
#[derive(Clone, Debug, PartialEq)]
pub enum CertificateConstants {
    Gas {
        alpha1: ComparisonFunction,
        alpha2: ComparisonFunction,
        alpha3: ComparisonFunction,
    },
    Ges {
        a1: f64,
        a2: f64,
        a3: f64,
    },
    GesSeminorm {
        a1: f64,
        a2: f64,
        a3: f64,
        a4: f64,
    },
}

impl CertificateConstants {
    pub fn variant(&self) -> &'static str {
        match self {
            Self::Gas { .. } => "gas",
            Self::Ges { .. } => "ges",
            Self::GesSeminorm { .. } => "ges-seminorm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Precondition(format!("constant {name} = {v} must be positive")))
            }
        };
        match self {
            Self::Gas { alpha1, alpha2, alpha3 } => {
                for (name, f) in [("alpha1", alpha1), ("alpha2", alpha2)] {
                    if f.class() != FunctionClass::KInf {
                        return Err(Error::InvalidComparison(format!("{name} must be of class K-infinity")));
                    }
                }
                if !matches!(alpha3.class(), FunctionClass::K | FunctionClass::KInf) {
                    return Err(Error::InvalidComparison("alpha3 must be of class K".into()));
                }
                Ok(())
            }
            Self::Ges { a1, a2, a3 } => {
                positive("a1", *a1)?;
                positive("a2", *a2)?;
                positive("a3", *a3)
            }
            Self::GesSeminorm { a1, a2, a3, a4 } => {
                positive("a1", *a1)?;
                positive("a2", *a2)?;
                positive("a3", *a3)?;
                positive("a4", *a4)
            }
        }
    }
}

/// Which inequality a tally or counterexample refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    /// `alpha1(|D phi|) <= V(phi)` or `a1 |D phi| <= V(phi)`.
    LowerBound,
    /// `V(phi) <= alpha2(||phi||)`, `a2 ||phi||` or `a2 ||phi||_a`.
    UpperBound,
    /// Decrease condition on `D+V`.
    Decrease,
    /// `||phi||_a <= a4 ||phi||`.
    Domination,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LowerBound => "i-lower",
            Self::UpperBound => "i-upper",
            Self::Decrease => "ii",
            Self::Domination => "iii",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "i-lower" => Ok(Self::LowerBound),
            "i-upper" => Ok(Self::UpperBound),
            "ii" => Ok(Self::Decrease),
            "iii" => Ok(Self::Domination),
            _ => Err(Error::Schema(format!("unknown condition `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Violation,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Violation => "violation",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionTally {
    pub condition: Condition,
    pub checked: usize,
    pub violations: usize,
    pub inconclusive: usize,
    /// Smallest `rhs - lhs` seen; negative when violated.
    pub worst_margin: f64,
}

impl ConditionTally {
    fn new(condition: Condition) -> Self {
        Self {
            condition,
            checked: 0,
            violations: 0,
            inconclusive: 0,
            worst_margin: f64::INFINITY,
        }
    }
}

/// A sampled history falsifying one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub condition: Condition,
    pub sample_index: usize,
    pub seed: Option<u64>,
    pub shell: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub error_band: f64,
    pub history: HistorySegment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub variant: String,
    pub samples: usize,
    pub conditions: Vec<ConditionTally>,
    pub counterexamples: Vec<Counterexample>,
    /// Samples whose functional evaluation failed (e.g. converse blowup).
    pub evaluation_failures: usize,
    pub constants: Option<CertificateConstants>,
    /// Largest sampled difference quotient `|V(a) - V(b)| / ||a - b||`.
    pub lipschitz_estimate: Option<f64>,
    pub verdict: Verdict,
}

impl CertificateReport {
    pub fn violations(&self) -> usize {
        self.conditions.iter().map(|c| c.violations).sum()
    }

    pub fn inconclusive(&self) -> usize {
        self.conditions.iter().map(|c| c.inconclusive).sum()
    }

    pub fn tally(&self, condition: Condition) -> Option<&ConditionTally> {
        self.conditions.iter().find(|c| c.condition == condition)
    }

    fn finish(&mut self) {
        self.verdict = if self.violations() > 0 {
            Verdict::Violation
        } else if self.inconclusive() > 0 || self.evaluation_failures > 0 {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
    }
}
