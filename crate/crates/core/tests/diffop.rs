use nalgebra::dmatrix;
use nfde::diffop::{gamma0, is_strongly_stable, spectral_radius, spectral_radius_at, StrongStability, SWEEP_LIMIT};
use nfde::{DifferenceOperator, Error, Matrix};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn scalar(coeffs: &[f64]) -> DifferenceOperator {
    let terms: Vec<(f64, f64)> = coeffs.iter().enumerate().map(|(j, &a)| ((j + 1) as f64, a)).collect();
    DifferenceOperator::scalar(&terms).unwrap()
}

fn matrices(p: usize, entries: &[f64]) -> DifferenceOperator {
    let mats = (0..p)
        .map(|j| Matrix::from_row_slice(2, 2, &entries[4 * j..4 * j + 4]))
        .collect();
    DifferenceOperator::new((1..=p).map(|j| j as f64 * 0.7).collect(), mats).unwrap()
}

/// Plain grid maximum, the oracle for the swept value.
fn brute_force(dop: &DifferenceOperator, r: usize) -> f64 {
    let p = dop.p();
    let mut best: f64 = 0.0;
    let total = r.pow(p as u32 - 1);
    for k in 0..total {
        let mut theta = vec![0.0; p];
        let mut rest = k;
        for t in theta.iter_mut().skip(1) {
            *t = TAU * (rest % r) as f64 / r as f64;
            rest /= r;
        }
        best = best.max(spectral_radius_at(dop, &theta));
    }
    best
}

#[test]
fn scalar_single_delay() {
    let m = gamma0(&scalar(&[0.5]), 8, 0).unwrap();
    assert_eq!(m.gamma0, 0.5);
}

#[test]
fn identity_has_unit_margin() {
    let dop = DifferenceOperator::single(1.0, Matrix::identity(2, 2)).unwrap();
    assert!((gamma0(&dop, 8, 0).unwrap().gamma0 - 1.0).abs() < 1e-15);
}

#[test]
fn two_delays_match_dense_oracle() {
    let dop = scalar(&[0.3, 0.4]);
    let m = gamma0(&dop, 64, 30).unwrap();
    assert!((m.gamma0 - 0.7).abs() < 1e-3, "gamma0 = {}", m.gamma0);
    let oracle = brute_force(&dop, 4096);
    assert!((m.gamma0 - oracle).abs() < 1e-3);
    assert_eq!(m.argmax_theta.len(), 2);
}

#[test]
fn verdicts() {
    let (v, _) = is_strongly_stable(&scalar(&[0.5]), 8, 1e-6).unwrap();
    assert_eq!(v, StrongStability::Stable);
    let nil = DifferenceOperator::single(1.0, dmatrix![0.0, 1.1; 0.0, 0.0]).unwrap();
    let (v, m) = is_strongly_stable(&nil, 8, 1e-6).unwrap();
    assert_eq!(v, StrongStability::Stable);
    assert!(m.gamma0 < 1e-12);
    let (v, m) = is_strongly_stable(&scalar(&[0.6, 0.6]), 32, 1e-6).unwrap();
    assert_eq!(v, StrongStability::Unstable);
    assert!((m.gamma0 - 1.2).abs() < 1e-6);
    let (v, _) = is_strongly_stable(&scalar(&[0.5, 0.5]), 32, 1e-6).unwrap();
    assert_eq!(v, StrongStability::Inconclusive);
}

#[test]
fn sweep_rejects_too_many_delays_and_coarse_grids() {
    let coeffs = vec![0.1; SWEEP_LIMIT + 1];
    assert!(matches!(gamma0(&scalar(&coeffs), 8, 0), Err(Error::UnsupportedSweep { .. })));
    assert!(gamma0(&scalar(&[0.1, 0.2]), 4, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dominates_each_term_and_refinement_is_monotone(
        p in 1usize..=3,
        entries in prop::collection::vec(-0.8f64..0.8, 12),
    ) {
        let dop = matrices(p, &entries);
        let coarse = gamma0(&dop, 8, 0).unwrap().gamma0;
        let fine = gamma0(&dop, 16, 0).unwrap().gamma0;
        prop_assert!(coarse >= 0.0);
        prop_assert!(fine >= coarse);
        if p == 1 {
            prop_assert!((coarse - spectral_radius(&dop.matrices()[0])).abs() < 1e-12);
        }
        if p > 1 {
            prop_assert!((coarse - brute_force(&dop, 8)).abs() <= 1e-12 * coarse.max(1.0));
        }
        let refined = gamma0(&dop, 16, 30).unwrap().gamma0;
        prop_assert!(refined >= fine);
    }

    #[test]
    fn similarity_and_scaling(
        entries in prop::collection::vec(-0.8f64..0.8, 8),
        t in prop::collection::vec(-1.0f64..1.0, 4),
        c in 0.0f64..3.0,
    ) {
        let dop = matrices(2, &entries);
        let tm = Matrix::from_row_slice(2, 2, &t) + Matrix::identity(2, 2) * 2.5;
        let inv = tm.clone().try_inverse().unwrap();
        let similar = DifferenceOperator::new(
            dop.delays().to_vec(),
            dop.matrices().iter().map(|a| &tm * a * &inv).collect(),
        ).unwrap();
        let scaled = DifferenceOperator::new(
            dop.delays().to_vec(),
            dop.matrices().iter().map(|a| a * c).collect(),
        ).unwrap();
        let g = gamma0(&dop, 16, 0).unwrap().gamma0;
        prop_assert!((gamma0(&similar, 16, 0).unwrap().gamma0 - g).abs() < 1e-6);
        prop_assert!((gamma0(&scaled, 16, 0).unwrap().gamma0 - c * g).abs() < 1e-9 * (1.0 + c * g));
    }
}
