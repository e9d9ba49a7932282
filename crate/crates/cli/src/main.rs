//! `nfde` command-line front end: one scenario file, one command, one report.

mod commands;
mod scenario;
mod tolerances;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::Parser;
use serde_json::{json, Value};

use nfde::schema::{to_json_string, REPORT_SCHEMA_VERSION};

use scenario::Context;
use tolerances::Tolerances;

#[derive(Debug, Parser)]
#[command(name = "nfde", version, about = "Stability analysis for neutral functional differential equations")]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,

    /// RNG seed; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides the scenario's `out`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

fn run(args: &Args) -> Result<u8> {
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut ctx = Context::load(&args.scenario)?;
    let mut tol = Tolerances::default();
    let table = ctx.scenario.tol.clone();
    tol.apply_table(&table)?;
    for flag in &args.tol {
        tol.apply_flag(flag)?;
    }
    let seed = args.seed.or(ctx.scenario.seed).unwrap_or(0);
    let out_dir = match (&args.out, &ctx.scenario.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => ctx.resolve(o),
        (None, None) => ctx.resolve(&PathBuf::from("out")),
    };
    let system = ctx.system()?;
    let outcome = commands::run(&mut ctx, &system, &tol, seed)?;

    let artifacts: Vec<Value> = outcome.artifacts.iter().map(|(n, _)| json!(n)).collect();
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": "nfde",
        "version": env!("CARGO_PKG_VERSION"),
        "command": ctx.scenario.command,
        "scenario_hash": ctx.hash_hex(),
        "seed": seed,
        "tolerances": tol.to_value(Some(&system)),
        "status": outcome.status.as_str(),
        "exit_code": outcome.status.exit_code(),
        "artifacts": artifacts,
        "result": outcome.result,
    });
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, bytes) in &outcome.artifacts {
        let p = out_dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let p = out_dir.join("report.json");
    fs::write(&p, to_json_string(&report)?).with_context(|| format!("writing {}", p.display()))?;
    println!("{}: {} ({})", ctx.scenario.command, outcome.status.as_str(), p.display());
    Ok(outcome.status.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::from(1)
        }
    }
}
