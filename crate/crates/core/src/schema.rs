//! JSON file formats for systems, histories, functionals, constants, inputs
//! and reports.
//!
//! Matrices are nested arrays of rows. Writers format every float with 17
//! significant digits, so a written file parses back bit-exactly and the same
//! value always produces the same bytes.
//!
//! ```json
//! {
//!   "n": 1,
//!   "dop": { "delays": [1.0], "matrices": [[[0.5]]] },
//!   "rhs": [ { "kind": "delay", "tau": 0.0, "matrix": [[-1.0]] } ]
//! }
//! ```

use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::certify::{CertificateConstants, CertificateReport, Counterexample};
use crate::comparison::{ComparisonFunction, FunctionClass, MonotoneTable, Profile};
use crate::error::{Error, Result};
use crate::lk::{ConverseFunctional, Functional, SemiNorm};
use crate::rhs::{Nonlinearity, RhsMap, RhsTerm};
use crate::sim::InputSignal;
use crate::{DifferenceOperator, HistorySegment, InterpOrder, Matrix, NfdeSystem, Vector};

/// Version tag written into every report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

fn schema_err(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn matrix_from(rows: &Rows, what: &str) -> Result<Matrix> {
    let r = rows.len();
    if r == 0 {
        return Err(schema_err(format!("{what}: empty matrix")));
    }
    let c = rows[0].len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(schema_err(format!("{what}: rows must be non-empty and of equal length")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vectors_from(rows: &Rows) -> Vec<Vector> {
    rows.iter().map(|r| Vector::from_vec(r.clone())).collect()
}

fn vector_rows(vs: &[Vector]) -> Rows {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

// ---------------------------------------------------------------- formatting

/// Pretty printer writing floats as `{:.16e}`.
struct FixedFloat<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed 17-significant-digit floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloat(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

// -------------------------------------------------------------------- system

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    n: usize,
    #[serde(default)]
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    dop: DopFile,
    rhs: Vec<TermFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DopFile {
    delays: Vec<f64>,
    matrices: Vec<Rows>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum TermFile {
    Delay {
        tau: f64,
        matrix: Rows,
    },
    Distributed {
        grid: Vec<f64>,
        kernels: Vec<Rows>,
    },
    Nonlinear {
        tau: f64,
        gain: Rows,
        nonlinearity: NonlinearityFile,
    },
    Input {
        gain: Rows,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nonlinearity: Option<NonlinearityFile>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NonlinearityFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ys: Option<Vec<f64>>,
}

impl NonlinearityFile {
    fn to_domain(&self) -> Result<Nonlinearity> {
        let table = match (&self.xs, &self.ys) {
            (Some(x), Some(y)) => Some((x.clone(), y.clone())),
            (None, None) => None,
            _ => return Err(schema_err("nonlinearity table needs both xs and ys")),
        };
        Nonlinearity::from_name(&self.name, self.level, table)
    }

    fn from_domain(nl: &Nonlinearity) -> Self {
        let mut f = Self {
            name: nl.name().to_string(),
            level: None,
            xs: None,
            ys: None,
        };
        match nl {
            Nonlinearity::Saturation { level } => f.level = Some(*level),
            Nonlinearity::Table { xs, ys } => {
                f.xs = Some(xs.clone());
                f.ys = Some(ys.clone());
            }
            _ => {}
        }
        f
    }
}

impl SystemFile {
    fn to_domain(&self) -> Result<NfdeSystem> {
        if self.dop.delays.len() != self.dop.matrices.len() {
            return Err(schema_err("dop.delays and dop.matrices differ in length"));
        }
        let mats = self
            .dop
            .matrices
            .iter()
            .enumerate()
            .map(|(j, m)| matrix_from(m, &format!("dop.matrices[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let dop = DifferenceOperator::new(self.dop.delays.clone(), mats)?;
        let mut terms = Vec::with_capacity(self.rhs.len());
        for (k, t) in self.rhs.iter().enumerate() {
            let at = |what: &str| format!("rhs[{k}].{what}");
            terms.push(match t {
                TermFile::Delay { tau, matrix } => RhsTerm::Delay {
                    tau: *tau,
                    matrix: matrix_from(matrix, &at("matrix"))?,
                },
                TermFile::Distributed { grid, kernels } => RhsTerm::Distributed {
                    grid: grid.clone(),
                    kernels: kernels
                        .iter()
                        .map(|m| matrix_from(m, &at("kernels")))
                        .collect::<Result<_>>()?,
                },
                TermFile::Nonlinear {
                    tau,
                    gain,
                    nonlinearity,
                } => RhsTerm::Nonlinear {
                    tau: *tau,
                    gain: matrix_from(gain, &at("gain"))?,
                    nonlinearity: nonlinearity.to_domain()?,
                },
                TermFile::Input { gain, nonlinearity } => RhsTerm::Input {
                    gain: matrix_from(gain, &at("gain"))?,
                    nonlinearity: nonlinearity
                        .as_ref()
                        .map(|n| n.to_domain())
                        .transpose()?
                        .unwrap_or(Nonlinearity::Identity),
                },
            });
        }
        let system = NfdeSystem::new(dop, RhsMap::new(self.n, self.m, terms)?)?;
        if let Some(d) = self.delta {
            if (d - system.delta()).abs() > 1e-12 * d.abs().max(1.0) {
                return Err(schema_err(format!(
                    "delta = {d} does not match the largest delay {}",
                    system.delta()
                )));
            }
        }
        Ok(system)
    }

    fn from_domain(s: &NfdeSystem) -> Self {
        let dop = s.dop();
        let rhs = s
            .rhs()
            .terms()
            .iter()
            .map(|t| match t {
                RhsTerm::Delay { tau, matrix } => TermFile::Delay {
                    tau: *tau,
                    matrix: matrix_rows(matrix),
                },
                RhsTerm::Distributed { grid, kernels } => TermFile::Distributed {
                    grid: grid.clone(),
                    kernels: kernels.iter().map(matrix_rows).collect(),
                },
                RhsTerm::Nonlinear {
                    tau,
                    gain,
                    nonlinearity,
                } => TermFile::Nonlinear {
                    tau: *tau,
                    gain: matrix_rows(gain),
                    nonlinearity: NonlinearityFile::from_domain(nonlinearity),
                },
                RhsTerm::Input { gain, nonlinearity } => TermFile::Input {
                    gain: matrix_rows(gain),
                    nonlinearity: Some(NonlinearityFile::from_domain(nonlinearity)),
                },
            })
            .collect();
        Self {
            n: s.dim(),
            m: s.input_dim(),
            delta: Some(s.delta()),
            dop: DopFile {
                delays: dop.delays().to_vec(),
                matrices: dop.matrices().iter().map(matrix_rows).collect(),
            },
            rhs,
        }
    }
}

pub fn system_from_json(text: &str) -> Result<NfdeSystem> {
    parse::<SystemFile>(text)?.to_domain()
}

pub fn system_to_json(system: &NfdeSystem) -> Result<String> {
    to_json_string(&SystemFile::from_domain(system))
}

// ------------------------------------------------------------------- history

/// `{grid, values}` with optional interpolation order and one-sided slopes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryFile {
    grid: Vec<f64>,
    values: Rows,
    #[serde(default)]
    order: InterpOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slopes_left: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slopes_right: Option<Rows>,
}

impl HistoryFile {
    fn to_domain(&self) -> Result<HistorySegment> {
        let values = vectors_from(&self.values);
        match (&self.slopes_left, &self.slopes_right) {
            (Some(l), Some(r)) => HistorySegment::with_slopes(
                self.grid.clone(),
                values,
                vectors_from(l),
                vectors_from(r),
                self.order,
            ),
            (None, None) => HistorySegment::new(self.grid.clone(), values, self.order),
            _ => Err(schema_err("slopes_left and slopes_right must be given together")),
        }
    }

    fn from_domain(h: &HistorySegment) -> Self {
        let c = h.curve();
        Self {
            grid: c.times().to_vec(),
            values: vector_rows(c.values()),
            order: c.order(),
            slopes_left: Some(vector_rows(c.left_slopes())),
            slopes_right: Some(vector_rows(c.right_slopes())),
        }
    }
}

pub fn history_from_json(text: &str) -> Result<HistorySegment> {
    parse::<HistoryFile>(text)?.to_domain()
}

pub fn history_to_json(history: &HistorySegment) -> Result<String> {
    to_json_string(&HistoryFile::from_domain(history))
}

pub fn history_to_value(history: &HistorySegment) -> Result<Value> {
    Ok(serde_json::to_value(HistoryFile::from_domain(history))?)
}

pub fn history_from_value(value: Value) -> Result<HistorySegment> {
    serde_json::from_value::<HistoryFile>(value)?.to_domain()
}

// ---------------------------------------------------------------- functional

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum FunctionalFile {
    PointQuadratic { p: Rows },
    IntegralQuadratic { p: Rows, grid: Vec<f64>, q: Vec<Rows> },
    SupNorm { c: f64 },
    DopNorm { c: f64 },
    Converse { rate: f64, horizon: f64, step: f64 },
    Composite { terms: Vec<WeightedFunctional> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightedFunctional {
    weight: f64,
    functional: FunctionalFile,
}

impl FunctionalFile {
    fn to_domain(&self) -> Result<Functional> {
        Ok(match self {
            Self::PointQuadratic { p } => Functional::PointQuadratic {
                p: matrix_from(p, "p")?,
            },
            Self::IntegralQuadratic { p, grid, q } => Functional::IntegralQuadratic {
                p: matrix_from(p, "p")?,
                grid: grid.clone(),
                q: q.iter().map(|m| matrix_from(m, "q")).collect::<Result<_>>()?,
            },
            Self::SupNorm { c } => Functional::SupNorm { c: *c },
            Self::DopNorm { c } => Functional::DopNorm { c: *c },
            Self::Converse { rate, horizon, step } => Functional::Converse(ConverseFunctional {
                rate: *rate,
                horizon: *horizon,
                step: *step,
            }),
            Self::Composite { terms } => Functional::Composite {
                terms: terms
                    .iter()
                    .map(|t| Ok((t.weight, t.functional.to_domain()?)))
                    .collect::<Result<_>>()?,
            },
        })
    }

    fn from_domain(v: &Functional) -> Self {
        match v {
            Functional::PointQuadratic { p } => Self::PointQuadratic { p: matrix_rows(p) },
            Functional::IntegralQuadratic { p, grid, q } => Self::IntegralQuadratic {
                p: matrix_rows(p),
                grid: grid.clone(),
                q: q.iter().map(matrix_rows).collect(),
            },
            Functional::SupNorm { c } => Self::SupNorm { c: *c },
            Functional::DopNorm { c } => Self::DopNorm { c: *c },
            Functional::Converse(cf) => Self::Converse {
                rate: cf.rate,
                horizon: cf.horizon,
                step: cf.step,
            },
            Functional::Composite { terms } => Self::Composite {
                terms: terms
                    .iter()
                    .map(|(w, f)| WeightedFunctional {
                        weight: *w,
                        functional: Self::from_domain(f),
                    })
                    .collect(),
            },
        }
    }
}

pub fn functional_from_json(text: &str) -> Result<Functional> {
    parse::<FunctionalFile>(text)?.to_domain()
}

pub fn functional_to_json(v: &Functional) -> Result<String> {
    to_json_string(&FunctionalFile::from_domain(v))
}

// ----------------------------------------------------------------- semi-norm

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum SemiNormFile {
    Dop,
    Endpoint,
    L2,
    Weighted { terms: Vec<WeightedSemiNorm> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightedSemiNorm {
    weight: f64,
    seminorm: SemiNormFile,
}

impl SemiNormFile {
    fn to_domain(&self) -> SemiNorm {
        match self {
            Self::Dop => SemiNorm::Dop,
            Self::Endpoint => SemiNorm::Endpoint,
            Self::L2 => SemiNorm::L2,
            Self::Weighted { terms } => {
                SemiNorm::Weighted(terms.iter().map(|t| (t.weight, t.seminorm.to_domain())).collect())
            }
        }
    }

    fn from_domain(s: &SemiNorm) -> Self {
        match s {
            SemiNorm::Dop => Self::Dop,
            SemiNorm::Endpoint => Self::Endpoint,
            SemiNorm::L2 => Self::L2,
            SemiNorm::Weighted(terms) => Self::Weighted {
                terms: terms
                    .iter()
                    .map(|(w, s)| WeightedSemiNorm {
                        weight: *w,
                        seminorm: Self::from_domain(s),
                    })
                    .collect(),
            },
        }
    }
}

pub fn seminorm_from_json(text: &str) -> Result<SemiNorm> {
    Ok(parse::<SemiNormFile>(text)?.to_domain())
}

pub fn seminorm_to_json(s: &SemiNorm) -> Result<String> {
    to_json_string(&SemiNormFile::from_domain(s))
}

// --------------------------------------------------------------- comparison

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComparisonFile {
    class: String,
    profile: ProfileFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ProfileFile {
    Linear {
        c: f64,
    },
    Power {
        c: f64,
        q: f64,
    },
    Decay {
        rate: f64,
    },
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
        tail_slope: f64,
    },
    Product {
        space: Box<ProfileFile>,
        time: Box<ProfileFile>,
    },
}

fn class_name(c: FunctionClass) -> &'static str {
    match c {
        FunctionClass::K => "k",
        FunctionClass::KInf => "k-inf",
        FunctionClass::L => "l",
        FunctionClass::KL => "kl",
    }
}

fn class_from(name: &str) -> Result<FunctionClass> {
    match name {
        "k" => Ok(FunctionClass::K),
        "k-inf" => Ok(FunctionClass::KInf),
        "l" => Ok(FunctionClass::L),
        "kl" => Ok(FunctionClass::KL),
        _ => Err(schema_err(format!("unknown function class `{name}`"))),
    }
}

impl ProfileFile {
    fn to_domain(&self) -> Result<Profile> {
        Ok(match self {
            Self::Linear { c } => Profile::Linear { c: *c },
            Self::Power { c, q } => Profile::Power { c: *c, q: *q },
            Self::Decay { rate } => Profile::Decay { rate: *rate },
            Self::Table { xs, ys, tail_slope } => Profile::Table(MonotoneTable::new(xs.clone(), ys.clone(), *tail_slope)?),
            Self::Product { space, time } => Profile::Product {
                space: Box::new(space.to_domain()?),
                time: Box::new(time.to_domain()?),
            },
        })
    }

    fn from_domain(p: &Profile) -> Self {
        match p {
            Profile::Linear { c } => Self::Linear { c: *c },
            Profile::Power { c, q } => Self::Power { c: *c, q: *q },
            Profile::Decay { rate } => Self::Decay { rate: *rate },
            Profile::Table(t) => Self::Table {
                xs: t.xs().to_vec(),
                ys: t.ys().to_vec(),
                tail_slope: t.tail_slope(),
            },
            Profile::Product { space, time } => Self::Product {
                space: Box::new(Self::from_domain(space)),
                time: Box::new(Self::from_domain(time)),
            },
        }
    }
}

impl ComparisonFile {
    fn to_domain(&self) -> Result<ComparisonFunction> {
        ComparisonFunction::new(class_from(&self.class)?, self.profile.to_domain()?)
    }

    fn from_domain(f: &ComparisonFunction) -> Self {
        Self {
            class: class_name(f.class()).to_string(),
            profile: ProfileFile::from_domain(f.profile()),
        }
    }
}

pub fn comparison_to_value(f: &ComparisonFunction) -> Result<Value> {
    Ok(serde_json::to_value(ComparisonFile::from_domain(f))?)
}

pub fn comparison_from_json(text: &str) -> Result<ComparisonFunction> {
    parse::<ComparisonFile>(text)?.to_domain()
}

// ---------------------------------------------------------------- constants

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
enum ConstantsFile {
    Gas {
        alpha1: ComparisonFile,
        alpha2: ComparisonFile,
        alpha3: ComparisonFile,
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

impl ConstantsFile {
    fn to_domain(&self) -> Result<CertificateConstants> {
        let c = match self {
            Self::Gas { alpha1, alpha2, alpha3 } => CertificateConstants::Gas {
                alpha1: alpha1.to_domain()?,
                alpha2: alpha2.to_domain()?,
                alpha3: alpha3.to_domain()?,
            },
            Self::Ges { a1, a2, a3 } => CertificateConstants::Ges {
                a1: *a1,
                a2: *a2,
                a3: *a3,
            },
            Self::GesSeminorm { a1, a2, a3, a4 } => CertificateConstants::GesSeminorm {
                a1: *a1,
                a2: *a2,
                a3: *a3,
                a4: *a4,
            },
        };
        c.validate()?;
        Ok(c)
    }

    fn from_domain(c: &CertificateConstants) -> Self {
        match c {
            CertificateConstants::Gas { alpha1, alpha2, alpha3 } => Self::Gas {
                alpha1: ComparisonFile::from_domain(alpha1),
                alpha2: ComparisonFile::from_domain(alpha2),
                alpha3: ComparisonFile::from_domain(alpha3),
            },
            CertificateConstants::Ges { a1, a2, a3 } => Self::Ges {
                a1: *a1,
                a2: *a2,
                a3: *a3,
            },
            CertificateConstants::GesSeminorm { a1, a2, a3, a4 } => Self::GesSeminorm {
                a1: *a1,
                a2: *a2,
                a3: *a3,
                a4: *a4,
            },
        }
    }
}

pub fn constants_from_json(text: &str) -> Result<CertificateConstants> {
    parse::<ConstantsFile>(text)?.to_domain()
}

pub fn constants_to_json(c: &CertificateConstants) -> Result<String> {
    to_json_string(&ConstantsFile::from_domain(c))
}

pub fn constants_to_value(c: &CertificateConstants) -> Result<Value> {
    Ok(serde_json::to_value(ConstantsFile::from_domain(c))?)
}

// -------------------------------------------------------------------- input

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum InputFile {
    Zero { m: usize },
    Constant { value: Vec<f64> },
    PiecewiseConstant { switches: Vec<f64>, values: Rows },
    Sinusoid { amplitude: Vec<f64>, omega: f64, phase: f64 },
    Table { times: Vec<f64>, values: Rows },
}

impl InputFile {
    fn to_domain(&self) -> Result<InputSignal> {
        let u = match self {
            Self::Zero { m } => InputSignal::Zero { m: *m },
            Self::Constant { value } => InputSignal::Constant {
                value: Vector::from_vec(value.clone()),
            },
            Self::PiecewiseConstant { switches, values } => InputSignal::PiecewiseConstant {
                switches: switches.clone(),
                values: vectors_from(values),
            },
            Self::Sinusoid { amplitude, omega, phase } => InputSignal::Sinusoid {
                amplitude: Vector::from_vec(amplitude.clone()),
                omega: *omega,
                phase: *phase,
            },
            Self::Table { times, values } => InputSignal::Table {
                times: times.clone(),
                values: vectors_from(values),
            },
        };
        u.validate()?;
        Ok(u)
    }

    fn from_domain(u: &InputSignal) -> Self {
        match u {
            InputSignal::Zero { m } => Self::Zero { m: *m },
            InputSignal::Constant { value } => Self::Constant {
                value: value.iter().copied().collect(),
            },
            InputSignal::PiecewiseConstant { switches, values } => Self::PiecewiseConstant {
                switches: switches.clone(),
                values: vector_rows(values),
            },
            InputSignal::Sinusoid { amplitude, omega, phase } => Self::Sinusoid {
                amplitude: amplitude.iter().copied().collect(),
                omega: *omega,
                phase: *phase,
            },
            InputSignal::Table { times, values } => Self::Table {
                times: times.clone(),
                values: vector_rows(values),
            },
        }
    }
}

pub fn input_from_json(text: &str) -> Result<InputSignal> {
    parse::<InputFile>(text)?.to_domain()
}

pub fn input_from_value(value: Value) -> Result<InputSignal> {
    serde_json::from_value::<InputFile>(value)?.to_domain()
}

pub fn input_to_json(u: &InputSignal) -> Result<String> {
    to_json_string(&InputFile::from_domain(u))
}

pub fn input_to_value(u: &InputSignal) -> Result<Value> {
    Ok(serde_json::to_value(InputFile::from_domain(u))?)
}

// ------------------------------------------------------------------ reports

/// JSON number, or `null` when not finite.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn counterexample_to_value(ce: &Counterexample) -> Result<Value> {
    Ok(json!({
        "condition": ce.condition.as_str(),
        "sample_index": ce.sample_index,
        "seed": ce.seed,
        "shell": ce.shell.map(num),
        "lhs": num(ce.lhs),
        "rhs": num(ce.rhs),
        "error_band": num(ce.error_band),
        "history": history_to_value(&ce.history)?,
    }))
}

pub fn report_to_value(r: &CertificateReport) -> Result<Value> {
    let conditions: Vec<Value> = r
        .conditions
        .iter()
        .map(|c| {
            json!({
                "condition": c.condition.as_str(),
                "checked": c.checked,
                "violations": c.violations,
                "inconclusive": c.inconclusive,
                "worst_margin": num(c.worst_margin),
            })
        })
        .collect();
    Ok(json!({
        "variant": r.variant,
        "verdict": r.verdict.as_str(),
        "samples": r.samples,
        "violations": r.violations(),
        "inconclusive": r.inconclusive(),
        "evaluation_failures": r.evaluation_failures,
        "conditions": conditions,
        "constants": r.constants.as_ref().map(constants_to_value).transpose()?,
        "lipschitz_estimate": r.lipschitz_estimate.map(num),
        "counterexamples": r
            .counterexamples
            .iter()
            .map(counterexample_to_value)
            .collect::<Result<Vec<_>>>()?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_history;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_json_string(&json!({"x": 0.1, "y": [1.0, -2.5e-300]})).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"), "{s}");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn system_round_trip() {
        let sys = NfdeSystem::new(
            DifferenceOperator::new(vec![0.5, 1.0], vec![dmatrix![0.2, 0.1; 0.0, 0.3], dmatrix![0.1, 0.0; 0.2, 0.1]])
                .unwrap(),
            RhsMap::new(
                2,
                1,
                vec![
                    RhsTerm::Delay {
                        tau: 0.0,
                        matrix: dmatrix![-1.0, 0.5; -0.5, -1.0],
                    },
                    RhsTerm::Nonlinear {
                        tau: 0.25,
                        gain: dmatrix![0.1, 0.0; 0.0, 0.1],
                        nonlinearity: Nonlinearity::Saturation { level: 2.0 },
                    },
                    RhsTerm::Distributed {
                        grid: vec![-1.0, 0.0],
                        kernels: vec![dmatrix![0.1, 0.0; 0.0, 0.1]; 2],
                    },
                    RhsTerm::Input {
                        gain: dmatrix![1.0; 0.0],
                        nonlinearity: Nonlinearity::Identity,
                    },
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let text = system_to_json(&sys).unwrap();
        assert_eq!(system_from_json(&text).unwrap(), sys);
    }

    #[test]
    fn minimal_system_file() {
        let sys = system_from_json(
            r#"{"n": 1, "dop": {"delays": [1.0], "matrices": [[[0.5]]]},
                "rhs": [{"kind": "delay", "tau": 0.0, "matrix": [[-1.0]]}]}"#,
        )
        .unwrap();
        assert_eq!(sys, NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0)]).unwrap());
    }

    #[test]
    fn unknown_fields_are_reported_with_position() {
        let err = system_from_json(r#"{"n": 1, "dopp": {}}"#).unwrap_err().to_string();
        assert!(err.contains("dopp") && err.contains("line"), "{err}");
    }

    #[test]
    fn history_round_trip_is_bit_exact() {
        let h = sample_history(2, 1.0, 3.0, 3, 42).unwrap();
        let back = history_from_json(&history_to_json(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn functional_and_constants_round_trip() {
        let v = Functional::Composite {
            terms: vec![
                (1.0, Functional::dop_quadratic(dmatrix![2.0])),
                (
                    0.5,
                    Functional::Converse(ConverseFunctional {
                        rate: 0.3,
                        horizon: 9.0,
                        step: 0.01,
                    }),
                ),
            ],
        };
        assert_eq!(functional_from_json(&functional_to_json(&v).unwrap()).unwrap(), v);
        let c = CertificateConstants::Gas {
            alpha1: ComparisonFunction::linear(0.5).unwrap(),
            alpha2: ComparisonFunction::power(2.0, 2.0).unwrap(),
            alpha3: ComparisonFunction::new(
                FunctionClass::K,
                Profile::Table(MonotoneTable::new(vec![0.0, 1.0], vec![0.0, 1.0], 0.0).unwrap()),
            )
            .unwrap(),
        };
        assert_eq!(constants_from_json(&constants_to_json(&c).unwrap()).unwrap(), c);
        let s = SemiNorm::Weighted(vec![(1.0, SemiNorm::Dop), (0.5, SemiNorm::L2)]);
        assert_eq!(seminorm_from_json(&seminorm_to_json(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn input_round_trip() {
        let u = InputSignal::PiecewiseConstant {
            switches: vec![1.0, 2.0],
            values: vec![dvector![1.0], dvector![-1.0], dvector![0.0]],
        };
        assert_eq!(input_from_json(&input_to_json(&u).unwrap()).unwrap(), u);
    }
}
