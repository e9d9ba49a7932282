use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use nfde::certify::{CheckOptions, FitOptions, GesOptions, IssOptions};
use nfde::diffop::DEFAULT_MARGIN_TOL;
use nfde::lk::DEFAULT_LADDER_DEPTH;
use nfde::schema::num;
use nfde::sim::DEFAULT_BLOWUP_BOUND;
use nfde::{Ladder, NfdeSystem};

/// Numerical knobs shared by the commands. Anything not overridden keeps the
/// library default.
#[derive(Clone, Debug)]
pub struct Tolerances {
    pub value_tol: f64,
    /// `None` means `min delay / 8`.
    pub ladder_h0: Option<f64>,
    pub ladder_depth: usize,
    pub margin_tol: f64,
    pub blowup_bound: f64,
    pub slack: f64,
    pub window_fraction: f64,
    pub min_samples: usize,
    pub min_per_shell: usize,
    pub max_counterexamples: usize,
    pub iss_tol: f64,
}

pub const NAMES: [&str; 11] = [
    "value_tol",
    "ladder_h0",
    "ladder_depth",
    "margin_tol",
    "blowup_bound",
    "slack",
    "window_fraction",
    "min_samples",
    "min_per_shell",
    "max_counterexamples",
    "iss_tol",
];

impl Default for Tolerances {
    fn default() -> Self {
        let check = CheckOptions::default();
        let fit = FitOptions::default();
        let ges = GesOptions::default();
        Self {
            value_tol: check.value_tol,
            ladder_h0: None,
            ladder_depth: DEFAULT_LADDER_DEPTH,
            margin_tol: DEFAULT_MARGIN_TOL,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            slack: fit.slack,
            window_fraction: ges.window_fraction,
            min_samples: ges.min_samples,
            min_per_shell: fit.min_per_shell,
            max_counterexamples: check.max_counterexamples,
            iss_tol: IssOptions::default().tol,
        }
    }
}

fn count(name: &str, value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
        bail!("tolerance `{name}` must be a non-negative integer, got {value}");
    }
    Ok(value as usize)
}

impl Tolerances {
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            bail!("tolerance `{name}` must be finite");
        }
        match name {
            "value_tol" => self.value_tol = value,
            "ladder_h0" => self.ladder_h0 = Some(value),
            "ladder_depth" => self.ladder_depth = count(name, value)?,
            "margin_tol" => self.margin_tol = value,
            "blowup_bound" => self.blowup_bound = value,
            "slack" => self.slack = value,
            "window_fraction" => self.window_fraction = value,
            "min_samples" => self.min_samples = count(name, value)?,
            "min_per_shell" => self.min_per_shell = count(name, value)?,
            "max_counterexamples" => self.max_counterexamples = count(name, value)?,
            "iss_tol" => self.iss_tol = value,
            _ => bail!("unknown tolerance `{name}` (known: {})", NAMES.join(", ")),
        }
        Ok(())
    }

    pub fn apply_table(&mut self, table: &toml::Table) -> Result<()> {
        for (name, v) in table {
            let value = match v {
                toml::Value::Float(x) => *x,
                toml::Value::Integer(i) => *i as f64,
                other => bail!("[tol] {name}: expected a number, found {}", other.type_str()),
            };
            self.set(name, value).with_context(|| format!("in [tol] {name}"))?;
        }
        Ok(())
    }

    /// Parses one `name=value` flag.
    pub fn apply_flag(&mut self, flag: &str) -> Result<()> {
        let (name, value) = flag
            .split_once('=')
            .with_context(|| format!("--tol expects name=value, got `{flag}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("--tol {name}: `{value}` is not a number"))?;
        self.set(name.trim(), value).with_context(|| format!("in --tol {flag}"))
    }

    pub fn ladder(&self, system: &NfdeSystem) -> Ladder {
        let h0 = self.ladder_h0.unwrap_or_else(|| Ladder::default_for(system).h0);
        Ladder::new(h0, self.ladder_depth)
    }

    pub fn check(&self, system: &NfdeSystem) -> CheckOptions {
        CheckOptions {
            ladder: Some(self.ladder(system)),
            value_tol: self.value_tol,
            max_counterexamples: self.max_counterexamples,
        }
    }

    pub fn fit(&self, system: &NfdeSystem) -> FitOptions {
        FitOptions {
            check: self.check(system),
            slack: self.slack,
            min_per_shell: self.min_per_shell,
        }
    }

    pub fn ges(&self, step: f64) -> GesOptions {
        GesOptions {
            step,
            window_fraction: self.window_fraction,
            min_samples: self.min_samples,
        }
    }

    /// Effective values, with the ladder start resolved against `system`.
    pub fn to_value(&self, system: Option<&NfdeSystem>) -> Value {
        let h0 = match (self.ladder_h0, system) {
            (Some(h), _) => num(h),
            (None, Some(s)) => num(Ladder::default_for(s).h0),
            (None, None) => Value::Null,
        };
        json!({
            "value_tol": num(self.value_tol),
            "ladder_h0": h0,
            "ladder_depth": self.ladder_depth,
            "margin_tol": num(self.margin_tol),
            "blowup_bound": num(self.blowup_bound),
            "slack": num(self.slack),
            "window_fraction": num(self.window_fraction),
            "min_samples": self.min_samples,
            "min_per_shell": self.min_per_shell,
            "max_counterexamples": self.max_counterexamples,
            "iss_tol": num(self.iss_tol),
        })
    }
}
