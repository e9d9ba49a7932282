//! Comparison functions of class K, K-infinity, L and KL.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionClass {
    K,
    KInf,
    L,
    KL,
}

/// Monotone piecewise-linear table starting at `(0, y0)`, extended past its
/// last node by a straight tail of slope `tail_slope`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    tail_slope: f64,
}

impl MonotoneTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, tail_slope: f64) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidComparison("table needs at least two nodes".into()));
        }
        if xs[0] != 0.0 {
            return Err(Error::InvalidComparison("table must start at x = 0".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidComparison("table abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) || !tail_slope.is_finite() {
            return Err(Error::InvalidComparison("non-finite table entry".into()));
        }
        Ok(Self { xs, ys, tail_slope })
    }

    /// `c * f` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| c * y).collect(),
            tail_slope: c * self.tail_slope,
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        let k = self.xs.len();
        if x >= self.xs[k - 1] {
            return self.ys[k - 1] + self.tail_slope * (x - self.xs[k - 1]);
        }
        let i = self.xs.partition_point(|&g| g <= x) - 1;
        let tau = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + tau * (self.ys[i + 1] - self.ys[i])
    }

    /// Largest strictly increasing table with `f(0) = 0` lying below every
    /// sample `(x_i, y_i)`, `x_i > 0`. Fails if some sample has `y_i <= 0`.
    pub fn lower_envelope(points: &[(f64, f64)]) -> Result<Self> {
        let mut pts = clean(points);
        if pts.is_empty() {
            return Err(Error::InvalidComparison("no samples with positive abscissa".into()));
        }
        // merge duplicates keeping the smallest ordinate
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.min(b.1);
                true
            } else {
                false
            }
        });
        let mut run = f64::INFINITY;
        for p in pts.iter_mut().rev() {
            run = run.min(p.1);
            p.1 = run;
        }
        if pts[0].1 <= 0.0 {
            return Err(Error::InvalidComparison(
                "a sample with non-positive ordinate forces the lower envelope to zero".into(),
            ));
        }
        let eta = 1e-9 * pts.last().unwrap().0;
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (x, y) in &pts {
            xs.push(*x);
            ys.push(y * x / (x + eta));
        }
        // rounding ties: keep the later node, which stays below both samples
        let mut k = ys.len() - 1;
        while k > 1 {
            if !(ys[k] > ys[k - 1]) {
                xs.remove(k - 1);
                ys.remove(k - 1);
            }
            k -= 1;
        }
        let tail = 1e-9 * ys.last().unwrap() / xs.last().unwrap();
        Self::new(xs, ys, tail)
    }

    /// Smallest strictly increasing table with `f(0) = 0` lying above every
    /// sample `(x_i, y_i)`, `x_i > 0`.
    pub fn upper_envelope(points: &[(f64, f64)]) -> Result<Self> {
        let mut pts = clean(points);
        if pts.is_empty() {
            return Err(Error::InvalidComparison("no samples with positive abscissa".into()));
        }
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.max(b.1);
                true
            } else {
                false
            }
        });
        let mut run = 0.0_f64;
        for p in pts.iter_mut() {
            run = run.max(p.1);
            p.1 = run;
        }
        let x_last = pts.last().unwrap().0;
        let y_last = pts.last().unwrap().1.max(f64::MIN_POSITIVE);
        let eta = 1e-9 * y_last / x_last;
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (x, y) in &pts {
            xs.push(*x);
            ys.push(y + eta * x);
        }
        // rounding ties: keep the earlier node, which stays above both samples
        let mut k = 1;
        while k + 1 < ys.len() {
            if !(ys[k + 1] > ys[k]) {
                xs.remove(k + 1);
                ys.remove(k + 1);
            } else {
                k += 1;
            }
        }
        let x_last = *xs.last().unwrap();
        let tail = *ys.last().unwrap() / x_last;
        Self::new(xs, ys, tail)
    }

    /// Exact pointwise maximum (`pick_max = true`) or minimum of two tables.
    fn lattice(&self, other: &Self, pick_max: bool) -> Result<Self> {
        let choose = |a: f64, b: f64| if pick_max { a.max(b) } else { a.min(b) };
        let mut xs: Vec<f64> = self.xs.iter().chain(&other.xs).copied().collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let mut cand = xs.clone();
        // crossings inside each interval
        for w in xs.windows(2) {
            let (d0, d1) = (self.eval(w[0]) - other.eval(w[0]), self.eval(w[1]) - other.eval(w[1]));
            if d0 * d1 < 0.0 {
                cand.push(w[0] + (w[1] - w[0]) * d0 / (d0 - d1));
            }
        }
        // crossing on the tails
        let x_end = *xs.last().unwrap();
        let d_end = self.eval(x_end) - other.eval(x_end);
        let ds = self.tail_slope - other.tail_slope;
        if ds != 0.0 && -d_end / ds > 0.0 {
            cand.push(x_end - d_end / ds);
        }
        cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cand.dedup();
        let ys: Vec<f64> = cand.iter().map(|&x| choose(self.eval(x), other.eval(x))).collect();
        let last = *cand.last().unwrap();
        let (sa, sb) = (self.tail_slope, other.tail_slope);
        let (va, vb) = (self.eval(last + 1.0), other.eval(last + 1.0));
        let tail = if (va >= vb) == pick_max { sa } else { sb };
        Self::new(cand, ys, tail)
    }

    pub fn pointwise_max(&self, other: &Self) -> Result<Self> {
        self.lattice(other, true)
    }

    pub fn pointwise_min(&self, other: &Self) -> Result<Self> {
        self.lattice(other, false)
    }
}

fn clean(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| *x > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts
}

/// Parametric or tabulated representation.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `c * s`
    Linear { c: f64 },
    /// `c * s^q`
    Power { c: f64, q: f64 },
    /// `exp(-rate * t)`
    Decay { rate: f64 },
    Table(MonotoneTable),
    /// `space(s) * time(t)`
    Product { space: Box<Profile>, time: Box<Profile> },
}

impl Profile {
    fn eval(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            Profile::Linear { c } => c * s,
            Profile::Power { c, q } => c * s.powf(*q),
            Profile::Decay { rate } => (-rate * s).exp(),
            Profile::Table(t) => t.eval(s),
            Profile::Product { .. } => f64::NAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonFunction {
    class: FunctionClass,
    profile: Profile,
}

impl ComparisonFunction {
    /// Validates the class invariants of `profile` before accepting it.
    pub fn new(class: FunctionClass, profile: Profile) -> Result<Self> {
        check_class(class, &profile)?;
        Ok(Self { class, profile })
    }

    pub fn linear(c: f64) -> Result<Self> {
        Self::new(FunctionClass::KInf, Profile::Linear { c })
    }

    pub fn power(c: f64, q: f64) -> Result<Self> {
        Self::new(FunctionClass::KInf, Profile::Power { c, q })
    }

    /// `beta(s, t) = M s exp(-lambda t)`.
    pub fn exponential_kl(m: f64, lambda: f64) -> Result<Self> {
        Self::new(
            FunctionClass::KL,
            Profile::Product {
                space: Box::new(Profile::Linear { c: m }),
                time: Box::new(Profile::Decay { rate: lambda }),
            },
        )
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// `gamma(s)` for single-argument classes.
    pub fn eval(&self, s: f64) -> f64 {
        self.profile.eval(s)
    }

    /// `beta(s, t)`; for single-argument classes `t` is ignored.
    pub fn eval2(&self, s: f64, t: f64) -> f64 {
        match &self.profile {
            Profile::Product { space, time } => space.eval(s) * time.eval(t),
            p => p.eval(s),
        }
    }

    /// Pointwise maximum; tables stay tables, parametric forms are tabulated
    /// on `[0, x_max]` first.
    pub fn pointwise_max(&self, other: &Self, x_max: f64) -> Result<Self> {
        self.lattice(other, x_max, true)
    }

    pub fn pointwise_min(&self, other: &Self, x_max: f64) -> Result<Self> {
        self.lattice(other, x_max, false)
    }

    fn lattice(&self, other: &Self, x_max: f64, pick_max: bool) -> Result<Self> {
        if matches!(self.class, FunctionClass::KL | FunctionClass::L)
            || matches!(other.class, FunctionClass::KL | FunctionClass::L)
        {
            return Err(Error::InvalidComparison("lattice operations are defined for K tables".into()));
        }
        let a = self.tabulate(x_max)?;
        let b = other.tabulate(x_max)?;
        let t = if pick_max { a.pointwise_max(&b)? } else { a.pointwise_min(&b)? };
        let class = if t.tail_slope() > 0.0 {
            FunctionClass::KInf
        } else {
            FunctionClass::K
        };
        Self::new(class, Profile::Table(t))
    }

    fn tabulate(&self, x_max: f64) -> Result<MonotoneTable> {
        match &self.profile {
            Profile::Table(t) => Ok(t.clone()),
            p => {
                const NODES: usize = 65;
                let xs: Vec<f64> = (0..NODES).map(|i| x_max * i as f64 / (NODES - 1) as f64).collect();
                let ys: Vec<f64> = xs.iter().map(|&x| p.eval(x)).collect();
                let tail = (ys[NODES - 1] - ys[NODES - 2]) / (xs[NODES - 1] - xs[NODES - 2]);
                MonotoneTable::new(xs, ys, tail)
            }
        }
    }
}

fn check_class(class: FunctionClass, profile: &Profile) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvalidComparison(msg.to_string()));
    match (class, profile) {
        (FunctionClass::K | FunctionClass::KInf, Profile::Linear { c }) => {
            if !(*c > 0.0) {
                return bad("linear comparison function needs c > 0");
            }
            Ok(())
        }
        (FunctionClass::K | FunctionClass::KInf, Profile::Power { c, q }) => {
            if !(*c > 0.0 && *q > 0.0) {
                return bad("power comparison function needs c > 0 and q > 0");
            }
            Ok(())
        }
        (FunctionClass::K | FunctionClass::KInf, Profile::Table(t)) => {
            if t.ys[0] != 0.0 {
                return bad("class K table must vanish at zero");
            }
            if t.ys.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("class K table must be strictly increasing");
            }
            if class == FunctionClass::KInf && !(t.tail_slope > 0.0) {
                return bad("class K-infinity table needs a positive tail slope");
            }
            if t.tail_slope < 0.0 {
                return bad("class K table cannot decrease past its last node");
            }
            Ok(())
        }
        (FunctionClass::L, Profile::Decay { rate }) => {
            if !(*rate > 0.0) {
                return bad("decay factor needs a positive rate");
            }
            Ok(())
        }
        (FunctionClass::L, Profile::Table(t)) => {
            if t.ys.iter().any(|&y| y < 0.0) || t.ys.windows(2).any(|w| w[1] > w[0]) {
                return bad("class L table must be non-negative and non-increasing");
            }
            if *t.ys.last().unwrap() != 0.0 || t.tail_slope != 0.0 {
                return bad("class L table must reach zero with a flat tail");
            }
            Ok(())
        }
        (FunctionClass::KL, Profile::Product { space, time }) => {
            check_class(FunctionClass::K, space)?;
            check_class(FunctionClass::L, time)
        }
        _ => bad("representation does not belong to the requested class"),
    }
}
