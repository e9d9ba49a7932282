use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const STABLE_NEUTRAL: &str = r#"{
  "n": 1,
  "dop": {"delays": [1.0], "matrices": [[[0.5]]]},
  "rhs": [{"kind": "delay", "tau": 0.0, "matrix": [[-1.0]]}]
}"#;

const UNSTABLE_ODE: &str = r#"{
  "n": 1,
  "delta": 1.0,
  "dop": {"delays": [1.0], "matrices": [[[0.0]]]},
  "rhs": [{"kind": "delay", "tau": 0.0, "matrix": [[1.0]]}]
}"#;

const STABLE_ODE: &str = r#"{
  "n": 1,
  "delta": 1.0,
  "dop": {"delays": [1.0], "matrices": [[[0.0]]]},
  "rhs": [{"kind": "delay", "tau": 0.0, "matrix": [[-1.0]]}]
}"#;

const INPUT_ODE: &str = r#"{
  "n": 1,
  "m": 1,
  "delta": 1.0,
  "dop": {"delays": [1.0], "matrices": [[[0.0]]]},
  "rhs": [
    {"kind": "delay", "tau": 0.0, "matrix": [[-1.0]]},
    {"kind": "input", "gain": [[1.0]]}
  ]
}"#;

const QUADRATIC: &str = r#"{"kind": "point-quadratic", "p": [[1.0]]}"#;

const WRONG_GES: &str = r#"{"variant": "ges", "a1": 1.0, "a2": 1.0, "a3": 0.5}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(files: &[(&str, &str)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in files {
            fs::write(dir.path().join(name), text).unwrap();
        }
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn run(&self, scenario: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nfde"))
            .arg("--scenario")
            .arg(self.path(scenario))
            .arg("--out")
            .arg(self.path(out))
            .arg("--threads")
            .arg("1")
            .args(extra)
            .output()
            .unwrap()
    }

    fn report(&self, out: &str) -> Value {
        read_json(&self.path(out).join("report.json"))
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const VERIFY_UNSTABLE: &str = r#"
command = "verify-lk"
system = "system.json"
seed = 7

[sampling]
shells = [0.1, 1.0]
per_shell = 10

[verify]
functional = "v.json"
constants = "constants.json"
"#;

fn unstable_fixture() -> Fixture {
    Fixture::new(&[
        ("system.json", UNSTABLE_ODE),
        ("v.json", QUADRATIC),
        ("constants.json", WRONG_GES),
        ("scenario.toml", VERIFY_UNSTABLE),
    ])
}

#[test]
fn check_dop_reports_gamma0() {
    let f = Fixture::new(&[
        ("system.json", STABLE_NEUTRAL),
        ("scenario.toml", "command = \"check-dop\"\nsystem = \"system.json\"\n"),
    ]);
    let o = f.run("scenario.toml", "out", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = f.report("out");
    assert_eq!(r["status"], "pass");
    assert_eq!(r["result"]["gamma0"].as_f64().unwrap(), 0.5);
    assert_eq!(r["result"]["verdict"], "stable");
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["tool"], "nfde");
    assert_eq!(r["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn check_dop_flags_unstable_operator() {
    let sys = STABLE_NEUTRAL.replace("[[[0.5]]]", "[[[1.5]]]");
    let f = Fixture::new(&[
        ("system.json", &sys),
        ("scenario.toml", "command = \"check-dop\"\nsystem = \"system.json\"\n"),
    ]);
    let o = f.run("scenario.toml", "out", &[]);
    assert_eq!(code(&o), 2);
    assert_eq!(f.report("out")["result"]["verdict"], "unstable");
}

#[test]
fn verify_lk_on_unstable_example_writes_counterexamples() {
    let f = unstable_fixture();
    let o = f.run("scenario.toml", "out", &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let r = f.report("out");
    assert_eq!(r["status"], "violation");
    assert_eq!(r["seed"], 7);
    let files = r["result"]["report"]["counterexample_files"].as_array().unwrap();
    assert!(!files.is_empty());
    for name in files {
        assert!(f.path("out").join(name.as_str().unwrap()).is_file());
    }
}

#[test]
fn identical_scenarios_give_identical_reports() {
    let f = unstable_fixture();
    assert_eq!(code(&f.run("scenario.toml", "a", &[])), 2);
    assert_eq!(code(&f.run("scenario.toml", "b", &[])), 2);
    for name in ["report.json", "counterexample-000.json"] {
        let a = fs::read(f.path("a").join(name)).unwrap();
        let b = fs::read(f.path("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn seed_flag_overrides_scenario_and_changes_samples() {
    let f = unstable_fixture();
    f.run("scenario.toml", "a", &[]);
    f.run("scenario.toml", "b", &["--seed", "8"]);
    let (a, b) = (f.report("a"), f.report("b"));
    assert_eq!(b["seed"], 8);
    assert_eq!(a["scenario_hash"], b["scenario_hash"]);
    assert_ne!(
        fs::read(f.path("a").join("counterexample-000.json")).unwrap(),
        fs::read(f.path("b").join("counterexample-000.json")).unwrap()
    );
}

#[test]
fn scenario_hash_covers_referenced_files() {
    let f = unstable_fixture();
    f.run("scenario.toml", "a", &[]);
    f.write("constants.json", &WRONG_GES.replace("0.5", "0.25"));
    f.run("scenario.toml", "b", &[]);
    assert_ne!(f.report("a")["scenario_hash"], f.report("b")["scenario_hash"]);
}

#[test]
fn counterexample_history_feeds_simulate_and_dplus() {
    let f = unstable_fixture();
    assert_eq!(code(&f.run("scenario.toml", "verify", &[])), 2);
    let ce = f.path("verify").join("counterexample-000.json");
    let ce = ce.to_str().unwrap();

    f.write(
        "simulate.toml",
        &format!(
            "command = \"simulate\"\nsystem = \"system.json\"\n[simulate]\nhistory = \"{ce}\"\nhorizon = 2.0\nstep = 0.05\n"
        ),
    );
    let o = f.run("simulate.toml", "sim", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(f.path("sim").join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,Dx_1");
    assert!(lines.count() >= 40);

    f.write(
        "dplus.toml",
        &format!(
            "command = \"dplus\"\nsystem = \"system.json\"\n[dplus]\nfunctional = \"v.json\"\nhistory = \"{ce}\"\n"
        ),
    );
    let o = f.run("dplus.toml", "dplus", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = f.report("dplus")["result"].clone();
    // V = x(0)^2 under x' = x has D+V = 2 V; the quotients carry an O(h) bias
    let (v, d) = (r["v"].as_f64().unwrap(), r["value"].as_f64().unwrap());
    assert!((d - 2.0 * v).abs() <= 1e-3 * v, "v = {v}, D+V = {d}");
    assert_eq!(r["quotients"].as_array().unwrap().len(), 13);
}

#[test]
fn simulate_csv_is_bit_exact_across_runs() {
    let f = Fixture::new(&[
        ("system.json", STABLE_NEUTRAL),
        ("h.json", r#"{"grid": [-1.0, 0.0], "values": [[1.0], [0.25]], "order": "linear"}"#),
        (
            "scenario.toml",
            "command = \"simulate\"\nsystem = \"system.json\"\n[simulate]\nhistory = \"h.json\"\nhorizon = 3.0\n",
        ),
    ]);
    f.run("scenario.toml", "a", &[]);
    f.run("scenario.toml", "b", &[]);
    let a = fs::read(f.path("a").join("trajectory.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(f.path("b").join("trajectory.csv")).unwrap());
}

#[test]
fn tolerance_overrides_are_recorded() {
    let f = unstable_fixture();
    let scenario = format!("{VERIFY_UNSTABLE}\n[tol]\nladder_depth = 8\n");
    f.write("tol.toml", &scenario);
    let o = f.run("tol.toml", "out", &["--tol", "value_tol=1e-10"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let t = f.report("out")["tolerances"].clone();
    assert_eq!(t["ladder_depth"], 8);
    assert_eq!(t["value_tol"].as_f64().unwrap(), 1e-10);
    assert_eq!(t["ladder_h0"].as_f64().unwrap(), 0.125);
}

#[test]
fn malformed_inputs_exit_with_diagnostics() {
    let f = unstable_fixture();
    f.write("bad.toml", "command = \"verify-lk\"\nsystem = \"system.json\"\nshells = 3\n");
    let o = f.run("bad.toml", "out", &[]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("shells") && e.contains("line"), "{e}");

    f.write("sys_bad.json", r#"{"n": 1, "dopp": {}}"#);
    f.write("bad2.toml", "command = \"check-dop\"\nsystem = \"sys_bad.json\"\n");
    let e = stderr(&f.run("bad2.toml", "out", &[]));
    assert!(e.contains("sys_bad.json") && e.contains("dopp"), "{e}");

    let o = f.run("scenario.toml", "out", &["--tol", "nonsense=1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown tolerance"));

    f.write("missing.toml", "command = \"dplus\"\nsystem = \"system.json\"\n");
    let o = f.run("missing.toml", "out", &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("[dplus]"));
}

#[test]
fn fit_lk_on_unstable_system_is_impossible() {
    let f = unstable_fixture();
    f.write(
        "fit.toml",
        "command = \"fit-lk\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 20\n[fit]\nfunctional = \"v.json\"\nvariant = \"ges\"\n",
    );
    let o = f.run("fit.toml", "out", &["--tol", "min_per_shell=20"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(f.report("out")["status"], "fit-impossible");
}

#[test]
fn fit_lk_writes_constants_that_verify() {
    // |D phi| meets the linear bounds exactly, so the fit transfers to fresh samples
    let f = Fixture::new(&[("system.json", STABLE_ODE), ("v.json", r#"{"kind": "dop-norm", "c": 1.0}"#)]);
    f.write(
        "fit.toml",
        "command = \"fit-lk\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 20\n[fit]\nfunctional = \"v.json\"\nvariant = \"ges\"\n",
    );
    let o = f.run("fit.toml", "fit", &["--tol", "min_per_shell=20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = read_json(&f.path("fit").join("constants.json"));
    assert!((c["a1"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{c}");
    assert!((c["a3"].as_f64().unwrap() - 1.0).abs() < 1e-3, "{c}");

    let constants = f.path("fit").join("constants.json");
    f.write(
        "verify.toml",
        &format!(
            "command = \"verify-lk\"\nsystem = \"system.json\"\nseed = 99\n[sampling]\nper_shell = 20\n[verify]\nfunctional = \"v.json\"\nconstants = \"{}\"\n",
            constants.display()
        ),
    );
    let o = f.run("verify.toml", "verify", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn estimate_ges_recovers_rate_and_flags_unstable() {
    let scenario = "command = \"estimate-ges\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 10\n[ges]\nhorizon = 8.0\n";
    let f = Fixture::new(&[("system.json", STABLE_ODE), ("scenario.toml", scenario)]);
    let o = f.run("scenario.toml", "out", &["--tol", "min_samples=10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = f.report("out")["result"]["ges"].clone();
    assert!((g["lambda_hat"].as_f64().unwrap() - 1.0).abs() < 1e-3, "{g}");

    f.write("system.json", UNSTABLE_ODE);
    let o = f.run("scenario.toml", "bad", &["--tol", "min_samples=10"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(f.report("bad")["status"], "not-ges");
    assert!(f.path("bad").join("counterexample-000.json").is_file());
}

#[test]
fn attraction_passes_for_stable_system() {
    let scenario = "command = \"attraction\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 10\n[attraction]\nbound = 1.0\neps = 0.1\nt_max = 6.0\n";
    let f = Fixture::new(&[("system.json", STABLE_ODE), ("scenario.toml", scenario)]);
    let o = f.run("scenario.toml", "out", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = f.report("out")["result"].clone();
    assert!(r["t_hat"].as_f64().unwrap() <= 6.0 - 1.0);
}

#[test]
fn iss_probe_fits_linear_gain() {
    let scenario = "command = \"iss-probe\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 10\n\
                    [iss]\nhorizon = 6.0\ninputs = [\"u1.json\", \"u2.json\"]\nlipschitz_pairs = 20\n";
    let f = Fixture::new(&[
        ("system.json", INPUT_ODE),
        ("u1.json", r#"{"kind": "constant", "value": [0.5]}"#),
        ("u2.json", r#"{"kind": "sinusoid", "amplitude": [1.0], "omega": 2.0, "phase": 0.0}"#),
        ("scenario.toml", scenario),
    ]);
    let o = f.run("scenario.toml", "out", &["--tol", "min_samples=10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = f.report("out")["result"].clone();
    assert_eq!(r["gamma"]["family"], "linear");
    assert_eq!(r["violations"], 0);
    assert!((r["lipschitz"]["l_slope"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn construct_converse_writes_reusable_functional() {
    let scenario = "command = \"construct-converse\"\nsystem = \"system.json\"\n[sampling]\nper_shell = 10\n\
                    [ges]\nhorizon = 8.0\n[converse]\n";
    let f = Fixture::new(&[("system.json", STABLE_ODE), ("scenario.toml", scenario)]);
    let o = f.run("scenario.toml", "out", &["--tol", "min_samples=10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = f.report("out")["result"].clone();
    let rate = r["rate"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 1e-3);
    assert!(r["horizon"].as_f64().unwrap() >= r["minimum_horizon"].as_f64().unwrap());
    let v = read_json(&f.path("out").join("converse.json"));
    assert_eq!(v["kind"], "converse");

    // the witness is a functional file like any other
    f.write("h.json", r#"{"grid": [-1.0, 0.0], "values": [[1.0], [1.0]], "order": "linear"}"#);
    let conv = f.path("out").join("converse.json");
    f.write(
        "dplus.toml",
        &format!(
            "command = \"dplus\"\nsystem = \"system.json\"\n[dplus]\nfunctional = \"{}\"\nhistory = \"h.json\"\n",
            conv.display()
        ),
    );
    let o = f.run("dplus.toml", "dplus", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = f.report("dplus")["result"].clone();
    assert!(d["value"].as_f64().unwrap() < 0.0, "{d}");
}
