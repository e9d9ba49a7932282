//! Seeded random histories in the ball `C_H = { phi : ||phi|| <= H }`.
//!
//! Draws mix three profile families: constants, random piecewise cubics and
//! trigonometric series with coefficients decaying like `1/k^2`. `roughness`
//! is the number of knots (cubic family) or harmonics (trigonometric family);
//! `roughness = 0` always gives a constant. Half the draws sit on the sphere
//! `||phi|| = H`, the rest have a uniform radius in `(0, H]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::history::{uniform_grid, Curve, InterpOrder, Side};
use crate::{HistorySegment, Vector};

/// Default number of grid nodes for sampled histories.
pub const DEFAULT_NODES: usize = 65;

/// Sub-samples per interval used when normalising the sup-norm.
const NORM_REFINEMENT: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub nodes: usize,
    pub roughness: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            roughness: 3,
        }
    }
}

/// A sampled history with its provenance.
#[derive(Clone, Debug)]
pub struct Sample {
    pub shell: f64,
    pub seed: u64,
    pub history: HistorySegment,
}

/// SplitMix64 step, used to derive independent per-sample seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_history(n: usize, delta: f64, bound: f64, roughness: u32, seed: u64) -> Result<HistorySegment> {
    sample_history_with(
        n,
        delta,
        bound,
        &SamplerConfig {
            nodes: DEFAULT_NODES,
            roughness,
        },
        seed,
    )
}

pub fn sample_history_with(
    n: usize,
    delta: f64,
    bound: f64,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<HistorySegment> {
    if n == 0 {
        return Err(Error::Precondition("state dimension must be positive".into()));
    }
    if !(bound > 0.0) || !(delta > 0.0) {
        return Err(Error::Precondition("bound H and horizon must be positive".into()));
    }
    if cfg.nodes < 2 {
        return Err(Error::Precondition("at least two nodes required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = if rng.random_bool(0.5) {
        bound
    } else {
        bound * (1.0 - rng.random::<f64>())
    };
    let family = if cfg.roughness == 0 {
        0
    } else {
        match rng.random_range(0..5) {
            0 => 0,
            1 | 2 => 1,
            _ => 2,
        }
    };
    let raw = match family {
        0 => {
            let dir = random_unit(&mut rng, n);
            HistorySegment::constant(delta, dir)?.resampled(cfg.nodes)?
        }
        1 => trigonometric(&mut rng, n, delta, cfg),
        _ => piecewise_cubic(&mut rng, n, delta, cfg)?,
    };
    let sup = refined_sup(&raw);
    if sup == 0.0 {
        return Ok(raw);
    }
    Ok(raw.scaled(radius / sup * (1.0 - 1e-12)))
}

/// Draws `per_shell` histories from each shell `C_H`, seeds derived from `seed`.
pub fn sample_shells(
    n: usize,
    delta: f64,
    shells: &[f64],
    per_shell: usize,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(shells.len() * per_shell);
    for (k, &h) in shells.iter().enumerate() {
        for i in 0..per_shell {
            let s = derive_seed(seed, (k * per_shell + i) as u64);
            out.push(Sample {
                shell: h,
                seed: s,
                history: sample_history_with(n, delta, h, cfg, s)?,
            });
        }
    }
    Ok(out)
}

/// Random vector uniformly distributed in the Euclidean ball of radius `bound`.
pub fn sample_ball<R: Rng>(rng: &mut R, m: usize, bound: f64) -> Vector {
    let dir = random_unit(rng, m);
    let r = bound * rng.random::<f64>().powf(1.0 / m as f64);
    dir * r
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

fn trigonometric<R: Rng>(rng: &mut R, n: usize, delta: f64, cfg: &SamplerConfig) -> HistorySegment {
    let harmonics = cfg.roughness as usize;
    let coeffs: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|_| {
            (0..=harmonics)
                .map(|k| {
                    let w = 1.0 / (1.0 + k as f64).powi(2);
                    (
                        w * rng.sample::<f64, _>(StandardNormal),
                        w * rng.sample::<f64, _>(StandardNormal),
                    )
                })
                .collect()
        })
        .collect();
    let base = std::f64::consts::PI / delta;
    HistorySegment::from_fn(delta, cfg.nodes, InterpOrder::CubicHermite, |s| {
        let mut v = Vector::zeros(n);
        let mut d = Vector::zeros(n);
        for (c, row) in coeffs.iter().enumerate() {
            for (k, &(a, b)) in row.iter().enumerate() {
                let w = base * k as f64;
                let (sn, cs) = (w * s).sin_cos();
                v[c] += a * cs + b * sn;
                d[c] += w * (b * cs - a * sn);
            }
        }
        (v, d)
    })
    .expect("uniform grid with finite values")
}

fn piecewise_cubic<R: Rng>(rng: &mut R, n: usize, delta: f64, cfg: &SamplerConfig) -> Result<HistorySegment> {
    let knots = cfg.roughness as usize + 1;
    let times = uniform_grid(delta, knots.max(2));
    let values: Vec<Vector> = times
        .iter()
        .map(|_| Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let knot_curve = Curve::from_values(times, values, InterpOrder::CubicHermite)?;
    let grid = uniform_grid(delta, cfg.nodes);
    let vals = grid.iter().map(|&s| knot_curve.eval(s)).collect();
    let slopes: Vec<Vector> = grid.iter().map(|&s| knot_curve.deriv(s, Side::Right)).collect();
    HistorySegment::with_slopes(grid, vals, slopes.clone(), slopes, InterpOrder::CubicHermite)
}

fn refined_sup(h: &HistorySegment) -> f64 {
    let g = h.grid();
    let mut m = h.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for w in g.windows(2) {
        for j in 1..NORM_REFINEMENT {
            let s = w[0] + (w[1] - w[0]) * j as f64 / NORM_REFINEMENT as f64;
            m = m.max(h.eval(s).norm());
        }
    }
    m
}
