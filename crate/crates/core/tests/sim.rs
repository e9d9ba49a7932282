use nalgebra::{dmatrix, dvector};
use nfde::history::InterpOrder;
use nfde::sampling::sample_history;
use nfde::sim::{integrate, InputSignal, StepPolicy};
use nfde::{DifferenceOperator, HistorySegment, NfdeSystem, RhsMap};
use proptest::prelude::*;

fn neutral_decay() -> NfdeSystem {
    NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0)]).unwrap()
}

fn one() -> HistorySegment {
    HistorySegment::constant(1.0, dvector![1.0]).unwrap()
}

/// Method of steps by hand for `d/dt (x(t) - x(t-1)/2) = -x(t)`, `xi = 1`:
/// `x = e^{-t}` on `[0, 1]`, `x = e^{-(t-1)} (e^{-1} - (t-1)/2)` on `[1, 2]`.
fn oracle(t: f64) -> f64 {
    if t <= 1.0 {
        (-t).exp()
    } else {
        (-(t - 1.0)).exp() * ((-1.0f64).exp() - 0.5 * (t - 1.0))
    }
}

#[test]
fn matches_closed_form_on_two_intervals() {
    let tr = integrate(&neutral_decay(), &one(), 2.0, &StepPolicy::fixed(1e-3), None).unwrap();
    assert!((tr.x(1.0)[0] - (-1.0f64).exp()).abs() < 1e-6);
    for (&t, x) in tr.times().iter().zip(tr.states()) {
        assert!((x[0] - oracle(t)).abs() < 1e-9, "t = {t}");
    }
    assert!(tr.breakpoints().contains(&1.0));
    assert!(!tr.order_reduced());
}

#[test]
fn fourth_order_between_breakpoints() {
    let err = |h: f64| {
        let tr = integrate(&neutral_decay(), &one(), 2.0, &StepPolicy::fixed(h), None).unwrap();
        tr.times()
            .iter()
            .zip(tr.states())
            .map(|(&t, x)| (x[0] - oracle(t)).abs())
            .fold(0.0, f64::max)
    };
    let e: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&h| err(h)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.0, "observed order {order} from {e:?}");
    }
}

#[test]
fn residual_is_small_and_second_order() {
    let r = |h: f64| {
        integrate(&neutral_decay(), &one(), 3.0, &StepPolicy::fixed(h), None)
            .unwrap()
            .residual_check(200)
            .unwrap()
    };
    let r1 = r(1e-3);
    assert!(r1 <= 1e-5, "{r1}");
    let ratio = r(2e-3) / r1;
    assert!((1.8..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn semigroup_reintegration() {
    let sys = NfdeSystem::new(
        DifferenceOperator::new(vec![0.5, 1.0], vec![dmatrix![0.2, 0.1; 0.0, -0.3], dmatrix![0.1, 0.0; 0.2, 0.1]]).unwrap(),
        RhsMap::linear(vec![
            (0.0, dmatrix![-1.0, 0.5; -0.5, -1.0]),
            (0.75, dmatrix![0.1, 0.0; 0.0, 0.2]),
        ])
        .unwrap(),
    )
    .unwrap();
    let policy = StepPolicy::fixed(1e-2);
    for seed in 0..5 {
        let xi = sample_history(2, sys.delta(), 1.0, 3, seed).unwrap();
        let full = integrate(&sys, &xi, 4.0, &policy, None).unwrap();
        let mid = full.segment(1.5).unwrap();
        let rest = integrate(&sys, &mid, 2.5, &policy, None).unwrap();
        let d = (full.x(4.0) - rest.x(2.5)).norm();
        assert!(d <= 1e-7, "seed {seed}: {d}");
    }
}

#[test]
fn solutions_scale_linearly() {
    let sys = neutral_decay();
    let xi = sample_history(1, 1.0, 1.0, 4, 11).unwrap();
    let policy = StepPolicy::fixed(1e-2);
    let a = integrate(&sys, &xi, 5.0, &policy, None).unwrap();
    let b = integrate(&sys, &xi.scaled(-3.5), 5.0, &policy, None).unwrap();
    for (xa, xb) in a.states().iter().zip(b.states()) {
        assert!((xb[0] + 3.5 * xa[0]).abs() <= 1e-9 * (1.0 + 3.5 * xa[0].abs()));
    }
}

#[test]
fn zero_rhs_keeps_dop_constant() {
    let sys = NfdeSystem::new(DifferenceOperator::scalar(&[(1.0, 0.5)]).unwrap(), RhsMap::zero(1)).unwrap();
    let xi = HistorySegment::from_fn(1.0, 33, InterpOrder::CubicHermite, |s| (dvector![s.sin()], dvector![s.cos()])).unwrap();
    let tr = integrate(&sys, &xi, 4.0, &StepPolicy::fixed(1e-2), None).unwrap();
    let z0 = tr.dop_values()[0][0];
    assert!(tr.dop_values().iter().all(|z| (z[0] - z0).abs() < 1e-14));
    assert!(tr.residual_check(100).unwrap() < 1e-5);
    let flat = integrate(&sys, &one(), 4.0, &StepPolicy::fixed(1e-2), None).unwrap();
    assert!(flat.residual_check(100).unwrap() < 1e-10);
}

#[test]
fn piecewise_constant_input_closed_form() {
    // d/dt x = -x + u, u = 1 on [0, 1), 0 afterwards, x(0) = 0
    let sys = NfdeSystem::new(
        DifferenceOperator::scalar(&[(1.0, 0.0)]).unwrap(),
        RhsMap::scalar(&[(0.0, -1.0)])
            .unwrap()
            .with_input(dmatrix![1.0], nfde::Nonlinearity::Identity)
            .unwrap(),
    )
    .unwrap();
    let u = InputSignal::PiecewiseConstant {
        switches: vec![1.0],
        values: vec![dvector![1.0], dvector![0.0]],
    };
    let xi = HistorySegment::zero(1, 1.0).unwrap();
    let tr = integrate(&sys, &xi, 3.0, &StepPolicy::fixed(1e-2), Some(&u)).unwrap();
    let x1 = 1.0 - (-1.0f64).exp();
    assert!((tr.x(1.0)[0] - x1).abs() < 1e-9);
    assert!((tr.x(3.0)[0] - x1 * (-2.0f64).exp()).abs() < 1e-9);
}

#[test]
fn incommensurate_delays_flag_order_reduction() {
    let sys = NfdeSystem::scalar(&[(1.0, 0.3), (std::f64::consts::SQRT_2, 0.2)], &[(0.0, -1.0)]).unwrap();
    let xi = HistorySegment::constant(sys.delta(), dvector![1.0]).unwrap();
    let tr = integrate(&sys, &xi, 3.0, &StepPolicy::fixed(1e-2), None).unwrap();
    assert!(tr.order_reduced());
    assert!(!tr.blowup());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn integration_is_deterministic(seed in 0u64..1000, a in -0.9f64..0.9, b in -2.0f64..0.5) {
        let sys = NfdeSystem::scalar(&[(1.0, a)], &[(0.0, b), (0.5, 0.1)]).unwrap();
        let xi = sample_history(1, 1.0, 1.0, 3, seed).unwrap();
        let p = StepPolicy::fixed(2.5e-2);
        let t1 = integrate(&sys, &xi, 3.0, &p, None).unwrap();
        let t2 = integrate(&sys, &xi, 3.0, &p, None).unwrap();
        prop_assert_eq!(t1.states(), t2.states());
        prop_assert_eq!(t1.dop_values(), t2.dop_values());
    }

    #[test]
    fn reconstruction_identity_holds(seed in 0u64..1000, a in -0.9f64..0.9) {
        let sys = NfdeSystem::scalar(&[(1.0, a)], &[(0.0, -1.0)]).unwrap();
        let xi = sample_history(1, 1.0, 2.0, 3, seed).unwrap();
        let tr = integrate(&sys, &xi, 3.0, &StepPolicy::fixed(2.5e-2), None).unwrap();
        for ((&t, x), z) in tr.times().iter().zip(tr.states()).zip(tr.dop_values()) {
            let r = x[0] - a * tr.x(t - 1.0)[0] - z[0];
            prop_assert!(r.abs() < 1e-12);
        }
    }
}
