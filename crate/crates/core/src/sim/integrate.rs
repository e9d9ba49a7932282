use std::io::Write;

use rayon::prelude::*;

use super::InputSignal;
use crate::error::{Error, Result};
use crate::history::{Curve, HistoryView, InterpOrder, Side};
use crate::{HistorySegment, NfdeSystem, Vector};

/// Default overflow bound on `|x(t)|`.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e12;

/// Tolerance for treating delays as rationally commensurate.
const COMMENSURATE_TOL: f64 = 1e-9;

/// Largest denominator tried when looking for a common delay base.
const MAX_DENOMINATOR: usize = 1000;

/// Largest lattice of delay combinations enumerated for breakpoints.
const MAX_LATTICE: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct StepPolicy {
    pub step: f64,
    pub blowup_bound: f64,
}

impl StepPolicy {
    pub fn fixed(step: f64) -> Self {
        Self {
            step,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        }
    }

    pub fn with_blowup_bound(mut self, bound: f64) -> Self {
        self.blowup_bound = bound;
        self
    }
}

/// Solution on `[-delta, t_end]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    system: NfdeSystem,
    input: Option<InputSignal>,
    store: Curve,
    first: usize,
    z: Vec<Vector>,
    zdot_left: Vec<Vector>,
    zdot_right: Vec<Vector>,
    breakpoints: Vec<f64>,
    horizon: f64,
    t_end: f64,
    step: f64,
    blowup: bool,
    order_reduced: bool,
}

/// `x_t` as a read-only view into a trajectory.
pub struct TrajectoryWindow<'a> {
    traj: &'a Trajectory,
    t: f64,
}

impl HistoryView for TrajectoryWindow<'_> {
    fn dim(&self) -> usize {
        self.traj.system.dim()
    }

    fn horizon(&self) -> f64 {
        self.traj.system.delta()
    }

    fn interp_order(&self) -> InterpOrder {
        self.traj.store.order()
    }

    fn eval(&self, s: f64) -> Vector {
        self.traj.store.eval(self.t + s)
    }
}

/// `x_t` during an RK stage: stored values up to `a`, linear from `x(a)` to
/// the stage reconstruction on `(a, t]`.
struct StageView<'a> {
    store: &'a Curve,
    delta: f64,
    a: f64,
    x_a: &'a Vector,
    t: f64,
    x_t: &'a Vector,
}

impl HistoryView for StageView<'_> {
    fn dim(&self) -> usize {
        self.x_t.len()
    }

    fn horizon(&self) -> f64 {
        self.delta
    }

    fn interp_order(&self) -> InterpOrder {
        self.store.order()
    }

    fn eval(&self, s: f64) -> Vector {
        let sigma = self.t + s;
        if s == 0.0 {
            return self.x_t.clone();
        }
        if sigma <= self.a || self.t <= self.a {
            return self.store.eval(sigma);
        }
        let w = (sigma - self.a) / (self.t - self.a);
        self.x_a * (1.0 - w) + self.x_t * w
    }
}

fn snap_tol(t: f64, scale: f64) -> f64 {
    64.0 * f64::EPSILON * t.abs().max(scale).max(1.0)
}

/// Common base `b` with every delay an integer multiple of `b` (within tolerance).
fn commensurate_base(delays: &[f64]) -> Option<(f64, Vec<usize>)> {
    let dmin = delays.iter().copied().fold(f64::INFINITY, f64::min);
    for k in 1..=MAX_DENOMINATOR {
        let b = dmin / k as f64;
        let ints: Vec<usize> = delays.iter().map(|d| (d / b).round() as usize).collect();
        if delays
            .iter()
            .zip(&ints)
            .all(|(d, &m)| (d - m as f64 * b).abs() <= COMMENSURATE_TOL)
        {
            return Some((b, ints));
        }
    }
    None
}

/// Breakpoints in `(0, horizon)` and the order-reduction flag.
fn breakpoints(seeds: &[f64], delays: &[f64], horizon: f64, delta: f64) -> (Vec<f64>, bool) {
    let mut out: Vec<f64> = seeds.iter().copied().filter(|&s| s > 0.0 && s < horizon).collect();
    let mut reduced = false;
    match commensurate_base(delays) {
        Some((b, ints)) => {
            let n_max = ((horizon + delta) / b).ceil() as usize + 1;
            if n_max > MAX_LATTICE {
                reduced = true;
            } else {
                let mut reach = vec![false; n_max + 1];
                reach[0] = true;
                for m in 1..=n_max {
                    reach[m] = ints.iter().any(|&k| k <= m && reach[m - k]);
                }
                for &s0 in seeds {
                    for (m, _) in reach.iter().enumerate().skip(1).filter(|(_, r)| **r) {
                        let t = s0 + m as f64 * b;
                        if t >= horizon {
                            break;
                        }
                        if t > 0.0 {
                            out.push(t);
                        }
                    }
                }
            }
        }
        None => reduced = true,
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|b, a| (*b - *a).abs() <= COMMENSURATE_TOL);
    (out, reduced)
}

/// Uniform mesh of width `step` merged with the breakpoints; points that fall
/// within a small gap of a breakpoint are dropped in its favour.
fn build_mesh(horizon: f64, step: f64, bps: &[f64]) -> Vec<f64> {
    let count = (horizon / step - 1e-9).ceil().max(1.0) as usize;
    let mut pts: Vec<(f64, bool)> = (0..count).map(|k| (k as f64 * step, k == 0)).collect();
    pts.extend(bps.iter().map(|&t| (t, true)));
    pts.push((horizon, true));
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let gap = step * 1e-6;
    let mut mesh: Vec<(f64, bool)> = Vec::with_capacity(pts.len());
    for p in pts {
        match mesh.last_mut() {
            Some(last) if p.0 - last.0 <= gap => {
                if p.1 && !last.1 {
                    *last = p;
                } else if p.1 && last.1 && p.0 == horizon {
                    // keep the exact horizon, unless it would move the origin
                    if last.0 != 0.0 {
                        *last = p;
                    }
                }
            }
            _ => mesh.push(p),
        }
    }
    mesh.into_iter().map(|p| p.0).collect()
}

pub fn integrate(
    system: &NfdeSystem,
    xi0: &HistorySegment,
    horizon: f64,
    policy: &StepPolicy,
    input: Option<&InputSignal>,
) -> Result<Trajectory> {
    let n = system.dim();
    let delta = system.delta();
    if xi0.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            found: xi0.dim(),
            context: "initial history",
        });
    }
    if (xi0.delta() - delta).abs() > 1e-12 * delta {
        return Err(Error::Horizon {
            horizon: xi0.delta(),
            required: delta,
        });
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    let min_delay = system.min_delay();
    if !(policy.step > 0.0) || policy.step > min_delay / 4.0 * (1.0 + 1e-12) {
        return Err(Error::StepPolicy(format!(
            "step {} must lie in (0, min delay / 4 = {}]",
            policy.step,
            min_delay / 4.0
        )));
    }
    if !(policy.blowup_bound > 0.0) {
        return Err(Error::StepPolicy("blowup bound must be positive".into()));
    }
    let m = system.input_dim();
    if let Some(u) = input {
        u.validate()?;
        if u.dim() != m {
            return Err(Error::Dimension {
                expected: m,
                found: u.dim(),
                context: "input signal",
            });
        }
    }
    let input_at = |t: f64, left: bool| -> Option<Vector> {
        if m == 0 {
            return None;
        }
        Some(match input {
            Some(u) if left => u.value_left(t),
            Some(u) => u.value(t),
            None => Vector::zeros(m),
        })
    };

    let dop = system.dop();
    let rhs = system.rhs();
    let mut seeds = vec![0.0];
    seeds.extend(xi0.kinks());
    if let Some(u) = input {
        seeds.extend(u.breakpoints());
    }
    let (bps, order_reduced) = breakpoints(&seeds, &system.propagation_delays(), horizon, delta);
    let mesh = build_mesh(horizon, policy.step, &bps);

    let mut store = xi0.curve().clone();
    let first = store.len() - 1;
    let delayed = |store: &Curve, t: f64| -> Vector {
        let mut out = Vector::zeros(n);
        for (d, a) in dop.delays().iter().zip(dop.matrices()) {
            out.gemv(1.0, a, &store.eval(t - d), 1.0);
        }
        out
    };
    let delayed_slope = |store: &Curve, t: f64, side: Side| -> Vector {
        let mut out = Vector::zeros(n);
        for (d, a) in dop.delays().iter().zip(dop.matrices()) {
            let s = t - d;
            out.gemv(1.0, a, &store.deriv_near(s, side, snap_tol(s, delta)), 1.0);
        }
        out
    };

    let z0 = dop.apply_unchecked(xi0);
    let u0 = input_at(0.0, false);
    let zd0 = rhs.eval_unchecked(xi0, u0.as_ref());
    store.set_last_right(&zd0 + delayed_slope(&store, 0.0, Side::Right));

    let mut z = vec![z0];
    let mut zdot_left = vec![zd0.clone()];
    let mut zdot_right = vec![zd0];
    let mut t_end = 0.0;
    let mut blowup = false;

    for w in mesh.windows(2) {
        let (a, b) = (w[0], w[1]);
        let tau = b - a;
        let x_a = store.values()[store.len() - 1].clone();
        let z_a = z.last().unwrap().clone();
        let stage = |store: &Curve, t: f64, zt: &Vector, u: Option<&Vector>| -> (Vector, Vector) {
            let x_t = zt + delayed(store, t);
            let view = StageView {
                store,
                delta,
                a,
                x_a: &x_a,
                t,
                x_t: &x_t,
            };
            (rhs.eval_unchecked(&view, u), x_t)
        };
        let mid = a + 0.5 * tau;
        let u_a = input_at(a, false);
        let u_mid = input_at(mid, false);
        let u_b = input_at(b, true);
        let (k1, _) = stage(&store, a, &z_a, u_a.as_ref());
        let (k2, _) = stage(&store, mid, &(&z_a + &k1 * (0.5 * tau)), u_mid.as_ref());
        let (k3, _) = stage(&store, mid, &(&z_a + &k2 * (0.5 * tau)), u_mid.as_ref());
        let (k4, _) = stage(&store, b, &(&z_a + &k3 * tau), u_b.as_ref());
        let z_b = &z_a + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (tau / 6.0);
        let (zd_left, x_b) = stage(&store, b, &z_b, u_b.as_ref());
        if !x_b.iter().all(|v| v.is_finite()) || x_b.norm() > policy.blowup_bound {
            blowup = true;
            break;
        }
        let u_br = input_at(b, false);
        let zd_right = if u_br == u_b {
            zd_left.clone()
        } else {
            stage(&store, b, &z_b, u_br.as_ref()).0
        };
        let left = &zd_left + delayed_slope(&store, b, Side::Left);
        let right = &zd_right + delayed_slope(&store, b, Side::Right);
        store.push(b, x_b, left, right);
        z.push(z_b);
        zdot_left.push(zd_left);
        zdot_right.push(zd_right);
        t_end = b;
    }

    let mut all_bps = vec![0.0];
    all_bps.extend(bps);
    Ok(Trajectory {
        system: system.clone(),
        input: input.cloned(),
        store,
        first,
        z,
        zdot_left,
        zdot_right,
        breakpoints: all_bps,
        horizon,
        t_end,
        step: policy.step,
        blowup,
        order_reduced,
    })
}

/// Integrates several initial histories in parallel.
pub fn integrate_batch(
    system: &NfdeSystem,
    histories: &[HistorySegment],
    horizon: f64,
    policy: &StepPolicy,
    input: Option<&InputSignal>,
) -> Vec<Result<Trajectory>> {
    histories
        .par_iter()
        .map(|h| integrate(system, h, horizon, policy, input))
        .collect()
}

fn hermite(a: f64, b: f64, ya: &Vector, yb: &Vector, da: &Vector, db: &Vector, t: f64) -> Vector {
    let w = b - a;
    let tau = (t - a) / w;
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let mut out = ya * (2.0 * t3 - 3.0 * t2 + 1.0);
    out.axpy((t3 - 2.0 * t2 + tau) * w, da, 1.0);
    out.axpy(-2.0 * t3 + 3.0 * t2, yb, 1.0);
    out.axpy((t3 - t2) * w, db, 1.0);
    out
}

impl Trajectory {
    pub fn system(&self) -> &NfdeSystem {
        &self.system
    }

    pub fn input(&self) -> Option<&InputSignal> {
        self.input.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Requested horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Achieved horizon; below `T` only after a blowup.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn blowup(&self) -> bool {
        self.blowup
    }

    /// Delays were not commensurate, so breakpoints beyond the seeds were not
    /// tracked and the observed order may drop.
    pub fn order_reduced(&self) -> bool {
        self.order_reduced
    }

    /// Breakpoint times in `[0, T)`, starting with `0`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Dense store of `x` on `[-delta, t_end]`.
    pub fn store(&self) -> &Curve {
        &self.store
    }

    /// Mesh nodes `t >= 0`.
    pub fn times(&self) -> &[f64] {
        &self.store.times()[self.first..]
    }

    /// `x` at the mesh nodes `t >= 0`.
    pub fn states(&self) -> &[Vector] {
        &self.store.values()[self.first..]
    }

    /// `D x_t` at the mesh nodes.
    pub fn dop_values(&self) -> &[Vector] {
        &self.z
    }

    pub fn x(&self, t: f64) -> Vector {
        self.store.eval(t)
    }

    /// `D x_t` at any `t` in `[0, t_end]`, by Hermite interpolation of `z`.
    pub fn dop_value(&self, t: f64) -> Vector {
        let ts = self.times();
        let t = t.clamp(0.0, self.t_end);
        let j = ts.partition_point(|&g| g <= t);
        if j == 0 || ts.len() == 1 {
            return self.z[0].clone();
        }
        let i = j - 1;
        if ts[i] == t || i + 1 == ts.len() {
            return self.z[i].clone();
        }
        hermite(
            ts[i],
            ts[i + 1],
            &self.z[i],
            &self.z[i + 1],
            &self.zdot_right[i],
            &self.zdot_left[i + 1],
            t,
        )
    }

    pub fn window(&self, t: f64) -> TrajectoryWindow<'_> {
        TrajectoryWindow { traj: self, t }
    }

    /// `x_t` as a stored history segment on `[-delta, 0]`.
    pub fn segment(&self, t: f64) -> Result<HistorySegment> {
        let delta = self.system.delta();
        let tol = snap_tol(t, delta);
        if t < -tol || t > self.t_end + tol {
            return Err(Error::OutOfRange { t, t_end: self.t_end });
        }
        let t = t.clamp(0.0, self.t_end);
        let lo = t - delta;
        let times = self.store.times();
        let start = times.partition_point(|&g| g <= lo + snap_tol(lo, delta));
        let stop = times.partition_point(|&g| g < t - tol);
        let mut grid = vec![-delta];
        let mut vals = vec![self.store.eval(lo)];
        let d_lo = self.store.deriv_near(lo, Side::Right, snap_tol(lo, delta));
        let mut left = vec![d_lo.clone()];
        let mut right = vec![d_lo];
        for i in start..stop {
            grid.push(times[i] - t);
            vals.push(self.store.values()[i].clone());
            left.push(self.store.left_slopes()[i].clone());
            right.push(self.store.right_slopes()[i].clone());
        }
        let d_hi = self.store.deriv_near(t, Side::Left, tol);
        grid.push(0.0);
        vals.push(match self.store.node_index(t) {
            Some(i) => self.store.values()[i].clone(),
            None => self.store.eval(t),
        });
        left.push(d_hi.clone());
        right.push(d_hi);
        HistorySegment::with_slopes(grid, vals, left, right, self.store.order())
    }

    /// Max of `|(D x_{t+h} - D x_{t-h}) / 2h - f(x_t)|` over `samples` mesh
    /// midpoints at least two steps away from every breakpoint, `h = step`.
    pub fn residual_check(&self, samples: usize) -> Result<f64> {
        if self.blowup {
            return Err(Error::Precondition("trajectory flagged blowup".into()));
        }
        let h = self.step;
        let ts = self.times();
        let candidates: Vec<f64> = ts
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .filter(|&t| t - h >= 0.0 && t + h <= self.t_end)
            .filter(|&t| self.breakpoints.iter().all(|&b| (t - b).abs() >= 2.0 * h))
            .collect();
        if candidates.is_empty() || samples == 0 {
            return Err(Error::Precondition("no admissible residual sample points".into()));
        }
        let count = samples.min(candidates.len());
        let dop = self.system.dop();
        let mut worst: f64 = 0.0;
        for k in 0..count {
            let t = candidates[k * candidates.len() / count];
            let zp = dop.apply_unchecked(&self.window(t + h));
            let zm = dop.apply_unchecked(&self.window(t - h));
            let u = self.input_value(t);
            let f = self.system.rhs().eval_unchecked(&self.window(t), u.as_ref());
            worst = worst.max(((zp - zm) / (2.0 * h) - f).norm());
        }
        Ok(worst)
    }

    pub(crate) fn input_value(&self, t: f64) -> Option<Vector> {
        let m = self.system.input_dim();
        if m == 0 {
            return None;
        }
        Some(match &self.input {
            Some(u) => u.value(t),
            None => Vector::zeros(m),
        })
    }

    /// CSV with header `t,x_1..x_n,Dx_1..Dx_n`, one row per mesh node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("Dx_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, x), z) in self.times().iter().zip(self.states()).zip(&self.z) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            row.extend(z.iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
