use anyhow::{bail, Context as _, Result};
use serde_json::{json, Value};

use nfde::certify::{
    check_uniform_attraction, construct_converse_ges, converse_horizon, estimate_ges, fit_constants, iss_probe,
    verify_gas_conditions, verify_ges_conditions, verify_ges_seminorm, CertificateReport, FitVariant, GesEstimate,
    GesOutcome, IssOptions, IssOutcome, Verdict,
};
use nfde::diffop::{is_strongly_stable, StrongStability};
use nfde::sampling::{derive_seed, Sample};
use nfde::schema::{self, num};
use nfde::{driver_derivative, integrate, Error, HistorySegment, NfdeSystem, StepPolicy, Vector};

use crate::scenario::{block, Context};
use crate::tolerances::Tolerances;

pub const COMMANDS: [&str; 9] = [
    "simulate",
    "check-dop",
    "dplus",
    "verify-lk",
    "fit-lk",
    "estimate-ges",
    "attraction",
    "construct-converse",
    "iss-probe",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Complete,
    Pass,
    Violation,
    Unstable,
    NotGes,
    NotIss,
    FitImpossible,
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Complete => "complete",
            Self::Pass => "pass",
            Self::Violation => "violation",
            Self::Unstable => "unstable",
            Self::NotGes => "not-ges",
            Self::NotIss => "not-iss",
            Self::FitImpossible => "fit-impossible",
            Self::Inconclusive => "inconclusive",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Self::Complete | Self::Pass => 0,
            Self::Violation | Self::Unstable | Self::NotGes | Self::NotIss | Self::FitImpossible => 2,
            Self::Inconclusive => 3,
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Self::Pass,
            Verdict::Violation => Self::Violation,
            Verdict::Inconclusive => Self::Inconclusive,
        }
    }
}

/// What a command produced: the report body plus extra files for the output
/// directory.
pub struct Outcome {
    pub status: Status,
    pub result: Value,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(status: Status, result: Value) -> Self {
        Self {
            status,
            result,
            artifacts: Vec::new(),
        }
    }

    fn add_json(&mut self, name: impl Into<String>, text: String) {
        self.artifacts.push((name.into(), text.into_bytes()));
    }

    fn add_history(&mut self, name: impl Into<String>, h: &HistorySegment) -> Result<()> {
        self.add_json(name, schema::history_to_json(h)?);
        Ok(())
    }
}

pub fn run(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let command = ctx.scenario.command.clone();
    match command.as_str() {
        "simulate" => simulate(ctx, system, tol),
        "check-dop" => check_dop(ctx, system, tol),
        "dplus" => dplus(ctx, system, tol),
        "verify-lk" => verify_lk(ctx, system, tol, seed),
        "fit-lk" => fit_lk(ctx, system, tol, seed),
        "estimate-ges" => ges(ctx, system, tol, seed),
        "attraction" => attraction(ctx, system, tol, seed),
        "construct-converse" => converse(ctx, system, tol, seed),
        "iss-probe" => iss(ctx, system, tol, seed),
        other => bail!("unknown command `{other}` (known: {})", COMMANDS.join(", ")),
    }
}

fn simulate(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances) -> Result<Outcome> {
    let b = block(&ctx.scenario.simulate, "simulate")?;
    let (history, input, horizon, step) = (b.history.clone(), b.input.clone(), b.horizon, b.step);
    let xi0 = ctx.parse(&history, schema::history_from_json)?;
    let input = input.map(|p| ctx.parse(&p, schema::input_from_json)).transpose()?;
    let policy = StepPolicy::fixed(step).with_blowup_bound(tol.blowup_bound);
    let traj = integrate(system, &xi0, horizon, &policy, input.as_ref())?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    let last = traj.states().last().map(|x| x.iter().map(|&v| num(v)).collect::<Vec<_>>());
    let mut out = Outcome::new(
        Status::Complete,
        json!({
            "horizon": num(horizon),
            "step": num(traj.step()),
            "t_end": num(traj.t_end()),
            "blowup": traj.blowup(),
            "order_reduced": traj.order_reduced(),
            "nodes": traj.times().len(),
            "breakpoints": traj.breakpoints().len(),
            "final_state": last,
            "trajectory": "trajectory.csv",
        }),
    );
    out.artifacts.push(("trajectory.csv".into(), csv));
    Ok(out)
}

fn check_dop(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances) -> Result<Outcome> {
    let resolution = ctx.scenario.check_dop.as_ref().map(|b| b.resolution).unwrap_or(256);
    let (verdict, margin) = is_strongly_stable(system.dop(), resolution, tol.margin_tol)?;
    let status = match verdict {
        StrongStability::Stable => Status::Pass,
        StrongStability::Unstable => Status::Unstable,
        StrongStability::Inconclusive => Status::Inconclusive,
    };
    Ok(Outcome::new(
        status,
        json!({
            "gamma0": num(margin.gamma0),
            "verdict": verdict.as_str(),
            "argmax_theta": margin.argmax_theta.iter().map(|&t| num(t)).collect::<Vec<_>>(),
            "resolution": margin.grid_resolution,
            "refined": margin.refined,
        }),
    ))
}

fn dplus(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances) -> Result<Outcome> {
    let b = block(&ctx.scenario.dplus, "dplus")?;
    let (functional, history, input) = (b.functional.clone(), b.history.clone(), b.input.clone());
    let v = ctx.parse(&functional, schema::functional_from_json)?;
    v.validate(system)?;
    let phi = ctx.parse(&history, schema::history_from_json)?;
    let u = input.map(Vector::from_vec);
    if let Some(u) = &u {
        if u.len() != system.input_dim() {
            bail!("[dplus] input has {} entries, the system has {} input channels", u.len(), system.input_dim());
        }
    }
    let est = driver_derivative(system, &v, &phi, u.as_ref(), &tol.ladder(system))?;
    let v0 = v.eval(system, &phi)?;
    Ok(Outcome::new(
        Status::Complete,
        json!({
            "functional": v.kind(),
            "v": num(v0),
            "value": num(est.value),
            "error_band": num(est.error_band),
            "nonsmooth": est.nonsmooth,
            "h_ladder": est.h_ladder.iter().map(|&h| num(h)).collect::<Vec<_>>(),
            "quotients": est.quotients.iter().map(|&q| num(q)).collect::<Vec<_>>(),
        }),
    ))
}

/// Writes each counterexample history and returns the report body.
fn certificate(out: &mut Outcome, report: &CertificateReport) -> Result<()> {
    let mut files = Vec::new();
    for (k, ce) in report.counterexamples.iter().enumerate() {
        let name = format!("counterexample-{k:03}.json");
        out.add_history(name.clone(), &ce.history)?;
        files.push(Value::String(name));
    }
    let mut body = schema::report_to_value(report)?;
    body["counterexample_files"] = Value::Array(files);
    out.result["report"] = body;
    Ok(())
}

fn verify_lk(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let b = block(&ctx.scenario.verify, "verify")?;
    let (functional, constants, seminorm) = (b.functional.clone(), b.constants.clone(), b.seminorm.clone());
    let v = ctx.parse(&functional, schema::functional_from_json)?;
    let constants = ctx.parse(&constants, schema::constants_from_json)?;
    let seminorm = seminorm.map(|p| ctx.parse(&p, schema::seminorm_from_json)).transpose()?;
    let samples = ctx.samples(system, seed)?;
    let opts = tol.check(system);
    let report = match (constants.variant(), &seminorm) {
        ("gas", _) => verify_gas_conditions(system, &v, &constants, &samples, &opts)?,
        ("ges", _) => verify_ges_conditions(system, &v, &constants, &samples, &opts)?,
        ("ges-seminorm", Some(s)) => verify_ges_seminorm(system, &v, s, &constants, &samples, &opts)?,
        (_, None) => bail!("[verify] constants of variant ges-seminorm need a `seminorm` file"),
        (other, _) => bail!("unsupported constants variant `{other}`"),
    };
    let mut out = Outcome::new(Status::from_verdict(report.verdict), json!({ "functional": v.kind() }));
    certificate(&mut out, &report)?;
    Ok(out)
}

fn fit_lk(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let b = block(&ctx.scenario.fit, "fit")?;
    let (functional, variant, seminorm) = (b.functional.clone(), b.variant.clone(), b.seminorm.clone());
    let v = ctx.parse(&functional, schema::functional_from_json)?;
    let seminorm = seminorm.map(|p| ctx.parse(&p, schema::seminorm_from_json)).transpose()?;
    let variant = match (variant.as_str(), seminorm) {
        ("gas", _) => FitVariant::Gas,
        ("ges", _) => FitVariant::Ges,
        ("ges-seminorm", Some(s)) => FitVariant::GesSeminorm(s),
        ("ges-seminorm", None) => bail!("[fit] variant ges-seminorm needs a `seminorm` file"),
        (other, _) => bail!("[fit] variant: expected gas, ges or ges-seminorm, found `{other}`"),
    };
    let samples = ctx.samples(system, seed)?;
    match fit_constants(system, &v, &variant, &samples, &tol.fit(system)) {
        Ok((constants, report)) => {
            let mut out = Outcome::new(
                Status::from_verdict(report.verdict),
                json!({ "functional": v.kind(), "constants_file": "constants.json" }),
            );
            out.add_json("constants.json", schema::constants_to_json(&constants)?);
            certificate(&mut out, &report)?;
            Ok(out)
        }
        Err(Error::FitImpossible(reason)) => Ok(Outcome::new(
            Status::FitImpossible,
            json!({ "functional": v.kind(), "reason": reason }),
        )),
        Err(e) => Err(e.into()),
    }
}

fn ges_value(g: &GesEstimate) -> Value {
    json!({
        "m_hat": num(g.m_hat),
        "lambda_hat": num(g.lambda_hat),
        "fit_residual": num(g.fit_residual),
        "trajectories": g.trajectories,
        "skipped": g.skipped,
        "horizon": num(g.horizon),
        "bound_violations": g.bound_violations,
        "rates": g.rates.iter().map(|&r| num(r)).collect::<Vec<_>>(),
    })
}

fn not_ges(out: &mut Outcome, reason: &str, index: usize, sample: &Sample, t_end: f64, blowup: bool) -> Result<()> {
    out.add_history("counterexample-000.json", &sample.history)?;
    out.result["not_ges"] = json!({
        "reason": reason,
        "sample_index": index,
        "seed": sample.seed,
        "shell": num(sample.shell),
        "t_end": num(t_end),
        "blowup": blowup,
        "history_file": "counterexample-000.json",
    });
    Ok(())
}

fn ges(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let b = block(&ctx.scenario.ges, "ges")?;
    let (horizon, step) = (b.horizon, b.step);
    let samples = ctx.samples(system, seed)?;
    match estimate_ges(system, &samples, horizon, &tol.ges(step))? {
        GesOutcome::Ges(g) => Ok(Outcome::new(Status::Complete, json!({ "ges": ges_value(&g) }))),
        GesOutcome::NotGes {
            reason,
            sample_index,
            sample,
            t_end,
            blowup,
        } => {
            let mut out = Outcome::new(Status::NotGes, json!({}));
            not_ges(&mut out, &reason, sample_index, &sample, t_end, blowup)?;
            Ok(out)
        }
    }
}

fn attraction(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let b = block(&ctx.scenario.attraction, "attraction")?;
    let (bound, eps, t_max, step) = (b.bound, b.eps, b.t_max, b.step);
    // attraction is a statement about C_H, so every sample sits on the H shell
    ctx.scenario.sampling.shells = vec![bound];
    let samples = ctx.samples(system, seed)?;
    let r = check_uniform_attraction(system, bound, eps, &samples, t_max, &tol.ges(step))?;
    let mut out = Outcome::new(
        Status::from_verdict(r.verdict),
        json!({
            "verdict": r.verdict.as_str(),
            "bound": num(bound),
            "eps": num(eps),
            "t_max": num(t_max),
            "t_hat": r.t_hat.map(num),
            "delta_hat": r.delta_hat.map(num),
            "samples": r.samples,
            "worst_index": r.worst_index,
            "worst_final_norm": num(r.worst_final_norm),
        }),
    );
    if let Some(s) = &r.worst_sample {
        out.add_history("worst-sample.json", &s.history)?;
        out.result["worst_sample_file"] = json!("worst-sample.json");
    }
    Ok(out)
}

fn converse(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let gb = block(&ctx.scenario.ges, "ges")?;
    let (ges_horizon, ges_step) = (gb.horizon, gb.step);
    let cb = block(&ctx.scenario.converse, "converse")?;
    let (rate, horizon, step, verify, fresh) = (cb.rate, cb.horizon, cb.step, cb.verify, cb.fresh_samples);
    let samples = ctx.samples(system, seed)?;
    let g = match estimate_ges(system, &samples, ges_horizon, &tol.ges(ges_step))? {
        GesOutcome::Ges(g) => g,
        GesOutcome::NotGes {
            reason,
            sample_index,
            sample,
            t_end,
            blowup,
        } => {
            let mut out = Outcome::new(Status::NotGes, json!({}));
            not_ges(&mut out, &reason, sample_index, &sample, t_end, blowup)?;
            return Ok(out);
        }
    };
    let rate = rate.unwrap_or(0.5 * g.lambda_hat);
    let horizon = match horizon {
        Some(h) => h,
        None => converse_horizon(&g, rate),
    };
    let v = construct_converse_ges(system, rate, horizon, &g, step)?;
    let mut out = Outcome::new(
        Status::Complete,
        json!({
            "ges": ges_value(&g),
            "rate": num(rate),
            "horizon": num(horizon),
            "minimum_horizon": num(converse_horizon(&g, rate)),
            "step": num(step),
            "functional_file": "converse.json",
        }),
    );
    out.add_json("converse.json", schema::functional_to_json(&v)?);
    if verify {
        let per_shell = ctx.scenario.sampling.per_shell;
        let (constants, fit_report) = fit_constants(system, &v, &FitVariant::Ges, &samples, &tol.fit(system))
            .context("fitting constants for the converse functional")?;
        ctx.scenario.sampling.per_shell = fresh.div_ceil(ctx.scenario.sampling.shells.len()).max(1);
        let fresh_samples = ctx.samples(system, derive_seed(seed, u64::MAX))?;
        ctx.scenario.sampling.per_shell = per_shell;
        let report = verify_ges_conditions(system, &v, &constants, &fresh_samples, &tol.check(system))?;
        out.status = Status::from_verdict(report.verdict);
        out.result["fit"] = schema::report_to_value(&fit_report)?;
        out.add_json("constants.json", schema::constants_to_json(&constants)?);
        out.result["constants_file"] = json!("constants.json");
        certificate(&mut out, &report)?;
    }
    Ok(out)
}

fn iss(ctx: &mut Context, system: &NfdeSystem, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let b = block(&ctx.scenario.iss, "iss")?;
    let (horizon, inputs, step, pairs) = (b.horizon, b.inputs.clone(), b.step, b.lipschitz_pairs);
    let inputs = inputs
        .iter()
        .map(|p| ctx.parse(p, schema::input_from_json))
        .collect::<Result<Vec<_>>>()?;
    let samples = ctx.samples(system, seed)?;
    let opts = IssOptions {
        ges: tol.ges(step),
        lipschitz_pairs: pairs,
        seed,
        tol: tol.iss_tol,
    };
    match iss_probe(system, &samples, &inputs, horizon, &opts)? {
        IssOutcome::Iss(e) => {
            let status = if e.violations == 0 { Status::Complete } else { Status::Violation };
            Ok(Outcome::new(
                status,
                json!({
                    "beta": { "m_hat": num(e.m_hat), "lambda_hat": num(e.lambda_hat),
                              "function": schema::comparison_to_value(&e.beta)? },
                    "gamma": { "family": e.gamma_family, "gain": num(e.gamma_gain),
                               "exponent": num(e.gamma_exponent),
                               "function": schema::comparison_to_value(&e.gamma)? },
                    "violations": e.violations,
                    "probes": e.probes,
                    "lipschitz": {
                        "l0": num(e.lipschitz.l0),
                        "l_slope": num(e.lipschitz.l_slope),
                        "pairs": e.lipschitz.pairs,
                        "input_points": e.lipschitz.input_points,
                        "l_function": e.lipschitz.l_fn.as_ref().map(schema::comparison_to_value).transpose()?,
                    },
                }),
            ))
        }
        IssOutcome::NotIss {
            reason,
            xi_index,
            input_index,
            history,
            input,
        } => {
            let mut out = Outcome::new(
                Status::NotIss,
                json!({
                    "reason": reason,
                    "xi_index": xi_index,
                    "input_index": input_index,
                    "history_file": "counterexample-000.json",
                }),
            );
            out.add_history("counterexample-000.json", &history)?;
            if let Some(u) = &input {
                out.add_json("counterexample-input-000.json", schema::input_to_json(u)?);
                out.result["input_file"] = json!("counterexample-input-000.json");
            }
            Ok(out)
        }
    }
}
