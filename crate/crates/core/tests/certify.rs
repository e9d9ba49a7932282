use nalgebra::{dmatrix, dvector};
use nfde::certify::{
    check_uniform_attraction, construct_converse_ges, converse_horizon, estimate_ges, estimate_lipschitz,
    fit_constants, iss_probe, verify_ges_conditions, verify_ges_seminorm, CertificateConstants, CheckOptions,
    Condition, FitOptions, FitVariant, GesOptions, GesOutcome, IssOptions, IssOutcome, Verdict,
};
use nfde::sampling::{sample_history, sample_shells, Sample, SamplerConfig};
use nfde::{DifferenceOperator, Error, Functional, HistorySegment, InputSignal, Matrix, NfdeSystem, Nonlinearity, RhsMap, SemiNorm};
use proptest::prelude::*;

fn ode(k: f64) -> NfdeSystem {
    NfdeSystem::scalar(&[(1.0, 0.0)], &[(0.0, k)]).unwrap()
}

fn neutral() -> NfdeSystem {
    NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0)]).unwrap()
}

/// `d/dt D x_t = -D x_t`, so `|D phi|` decays at rate one exactly.
fn dop_contracting() -> NfdeSystem {
    NfdeSystem::scalar(&[(1.0, 0.5)], &[(0.0, -1.0), (1.0, 0.5)]).unwrap()
}

fn with_input(nl: Nonlinearity) -> NfdeSystem {
    NfdeSystem::new(
        DifferenceOperator::scalar(&[(1.0, 0.0)]).unwrap(),
        RhsMap::scalar(&[(0.0, -1.0)]).unwrap().with_input(dmatrix![1.0], nl).unwrap(),
    )
    .unwrap()
}

fn shells(sys: &NfdeSystem, per_shell: usize, seed: u64) -> Vec<Sample> {
    sample_shells(sys.dim(), sys.delta(), &[0.1, 1.0, 10.0], per_shell, &SamplerConfig::default(), seed).unwrap()
}

fn quadratic() -> Functional {
    Functional::PointQuadratic { p: Matrix::identity(1, 1) }
}

#[test]
fn quadratic_decay_rate_is_fitted() {
    let sys = ode(-1.0);
    let samples = shells(&sys, 100, 1);
    let (c, report) = fit_constants(&sys, &quadratic(), &FitVariant::Ges, &samples, &FitOptions::default()).unwrap();
    let CertificateConstants::Ges { a3, .. } = c else { panic!() };
    assert!((a3 - 2.0).abs() <= 0.05, "a3 = {a3}");
    assert_eq!(report.violations(), 0);
}

#[test]
fn dop_norm_lower_constant_is_one() {
    let sys = dop_contracting();
    let samples = shells(&sys, 100, 2);
    let v = Functional::DopNorm { c: 1.0 };
    let (c, _) = fit_constants(&sys, &v, &FitVariant::Ges, &samples, &FitOptions::default()).unwrap();
    let CertificateConstants::Ges { a1, .. } = c else { panic!() };
    assert!((a1 - 1.0).abs() <= 1e-9, "a1 = {a1}");
}

#[test]
fn unstable_fit_is_impossible() {
    let sys = ode(1.0);
    let samples = shells(&sys, 100, 3);
    let err = fit_constants(&sys, &quadratic(), &FitVariant::Ges, &samples, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, Error::FitImpossible(_)), "{err}");
}

#[test]
fn fit_rejects_thin_shells() {
    let sys = ode(-1.0);
    let samples = shells(&sys, 10, 3);
    let err = fit_constants(&sys, &quadratic(), &FitVariant::Ges, &samples, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn gas_fit_passes_its_own_samples() {
    let sys = dop_contracting();
    let samples = shells(&sys, 100, 4);
    let (c, report) = fit_constants(&sys, &quadratic(), &FitVariant::Gas, &samples, &FitOptions::default()).unwrap();
    assert!(matches!(c, CertificateConstants::Gas { .. }));
    assert_eq!(report.violations(), 0);
}

#[test]
fn wrong_constants_produce_reverifiable_counterexamples() {
    let sys = ode(-1.0);
    let samples = shells(&sys, 20, 5);
    let c = CertificateConstants::Ges { a1: 1.0, a2: 1.0, a3: 3.0 };
    let opts = CheckOptions::default();
    let report = verify_ges_conditions(&sys, &quadratic(), &c, &samples, &opts).unwrap();
    assert_eq!(report.verdict, Verdict::Violation);
    assert!(report.tally(Condition::Decrease).unwrap().violations > 0);
    assert!(!report.counterexamples.is_empty());
    for ce in &report.counterexamples {
        assert!(ce.recheck(&sys, &quadratic(), &c, None, &opts).unwrap());
    }
}

#[test]
fn seminorm_variant_checks_domination() {
    let sys = dop_contracting();
    let samples = shells(&sys, 100, 6);
    let semi = SemiNorm::Dop;
    let (c, report) =
        fit_constants(&sys, &quadratic(), &FitVariant::GesSeminorm(semi.clone()), &samples, &FitOptions::default())
            .unwrap();
    assert_eq!(report.tally(Condition::Domination).unwrap().violations, 0);
    let CertificateConstants::GesSeminorm { a4, .. } = c else { panic!() };
    assert!(a4 <= semi.domination_bound(&sys) * (1.0 + 1e-9));
    let again = verify_ges_seminorm(&sys, &quadratic(), &semi, &c, &samples, &CheckOptions::default()).unwrap();
    assert_eq!(again.violations(), report.violations());
}

#[test]
fn exact_exponential_decay_is_recovered() {
    let sys = ode(-1.0);
    let samples = shells(&sys, 10, 7);
    let GesOutcome::Ges(g) = estimate_ges(&sys, &samples, 20.0, &GesOptions::default()).unwrap() else {
        panic!("expected GES")
    };
    assert!((0.99..=1.01).contains(&g.lambda_hat), "{g:?}");
    assert!((1.0..=1.05).contains(&g.m_hat), "{g:?}");
    assert_eq!(g.bound_violations, 0);
}

#[test]
fn neutral_example_is_ges() {
    let sys = neutral();
    let samples = shells(&sys, 10, 8);
    let GesOutcome::Ges(g) = estimate_ges(&sys, &samples, 40.0, &GesOptions::default()).unwrap() else {
        panic!("expected GES")
    };
    assert!(g.lambda_hat > 0.0);
    assert_eq!(g.bound_violations, 0);
}

#[test]
fn divergent_system_is_not_ges() {
    let sys = ode(1.0);
    let samples = shells(&sys, 10, 9);
    match estimate_ges(&sys, &samples, 40.0, &GesOptions::default()).unwrap() {
        GesOutcome::NotGes { sample, .. } => assert!(sample.history.sup_norm() > 0.0),
        GesOutcome::Ges(g) => panic!("unexpected {g:?}"),
    }
}

#[test]
fn too_few_runs_rejected() {
    let sys = ode(-1.0);
    let samples = shells(&sys, 2, 9);
    assert!(estimate_ges(&sys, &samples, 10.0, &GesOptions::default()).is_err());
}

#[test]
fn attraction_time_of_exponential_decay() {
    let sys = ode(-1.0);
    let samples = sample_shells(1, 1.0, &[1.0], 40, &SamplerConfig::default(), 10).unwrap();
    let opts = GesOptions::default();
    let eps = (-2.0f64).exp();
    let r = check_uniform_attraction(&sys, 1.0, eps, &samples, 6.0, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    let t = r.t_hat.unwrap();
    assert!((t - 2.0).abs() <= 2.0 * opts.step, "{t}");
    let d = r.delta_hat.unwrap();
    assert!(d < eps && d > 0.0);
}

#[test]
fn attraction_trivial_when_eps_exceeds_bound() {
    let sys = ode(-1.0);
    let samples = sample_shells(1, 1.0, &[1.0], 20, &SamplerConfig::default(), 11).unwrap();
    let r = check_uniform_attraction(&sys, 1.0, 1.5, &samples, 4.0, &GesOptions::default()).unwrap();
    assert_eq!(r.t_hat, Some(0.0));
    assert_eq!(r.delta_hat, Some(1.0));
}

#[test]
fn attraction_inconclusive_when_unstable() {
    let sys = ode(1.0);
    let samples = sample_shells(1, 1.0, &[1.0], 20, &SamplerConfig::default(), 12).unwrap();
    let r = check_uniform_attraction(&sys, 1.0, 0.1, &samples, 5.0, &GesOptions::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.worst_sample.is_some());
    assert!(check_uniform_attraction(&sys, 1.0, 0.0, &samples, 5.0, &GesOptions::default()).is_err());
}

fn ges_of(sys: &NfdeSystem, horizon: f64) -> nfde::certify::GesEstimate {
    match estimate_ges(sys, &shells(sys, 10, 13), horizon, &GesOptions::default()).unwrap() {
        GesOutcome::Ges(g) => g,
        other => panic!("{other:?}"),
    }
}

#[test]
fn converse_of_pure_decay_is_endpoint_norm() {
    let sys = ode(-1.0);
    let g = ges_of(&sys, 20.0);
    let t = converse_horizon(&g, 0.5).max(1.0);
    let v = construct_converse_ges(&sys, 0.5, t, &g, 1e-2).unwrap();
    let zero = HistorySegment::zero(1, 1.0).unwrap();
    assert_eq!(v.eval(&sys, &zero).unwrap(), 0.0);
    for seed in 0..10 {
        let phi = sample_history(1, 1.0, 2.0, 3, seed).unwrap();
        let val = v.eval(&sys, &phi).unwrap();
        assert!((val - phi.head().norm()).abs() <= 1e-9 * phi.head().norm().max(1.0), "{val}");
    }
}

#[test]
fn converse_preconditions() {
    let sys = neutral();
    let g = ges_of(&sys, 40.0);
    assert!(construct_converse_ges(&sys, g.lambda_hat, 100.0, &g, 1e-2).is_err());
    assert!(construct_converse_ges(&sys, 0.0, 100.0, &g, 1e-2).is_err());
    let t = converse_horizon(&g, 0.5 * g.lambda_hat);
    assert!(construct_converse_ges(&sys, 0.5 * g.lambda_hat, 0.5 * t, &g, 1e-2).is_err());
    assert!(construct_converse_ges(&sys, 0.5 * g.lambda_hat, t, &g, 1e-2).is_ok());
}

#[test]
fn converse_dominates_dop_norm() {
    let sys = neutral();
    let g = ges_of(&sys, 40.0);
    let a = 0.5 * g.lambda_hat;
    let v = construct_converse_ges(&sys, a, converse_horizon(&g, a), &g, 1e-2).unwrap();
    for s in shells(&sys, 5, 14) {
        let z = sys.dop().apply(&s.history).unwrap().norm();
        assert!(v.eval(&sys, &s.history).unwrap() >= z);
    }
}

#[test]
fn converse_blowup_is_an_evaluation_error() {
    let sys = ode(1.0);
    let v = Functional::Converse(nfde::lk::ConverseFunctional { rate: 0.1, horizon: 40.0, step: 1e-2 });
    let phi = HistorySegment::constant(1.0, dvector![1.0]).unwrap();
    assert!(matches!(v.eval(&sys, &phi), Err(Error::Evaluation(_))));
}

#[test]
fn lipschitz_of_linear_map() {
    let sys = with_input(Nonlinearity::Identity);
    let l = estimate_lipschitz(&sys, 1.0, 1.0, 200, 15).unwrap();
    assert!((0.95..=1.0 + 1e-12).contains(&l.l0), "{l:?}");
    assert!((0.95..=1.0 + 1e-12).contains(&l.l_slope), "{l:?}");
}

#[test]
fn lipschitz_of_zero_map() {
    let sys = NfdeSystem::new(DifferenceOperator::scalar(&[(1.0, 0.0)]).unwrap(), RhsMap::zero(1)).unwrap();
    let l = estimate_lipschitz(&sys, 1.0, 1.0, 50, 16).unwrap();
    assert_eq!(l.l0, 0.0);
    assert_eq!(l.l_slope, 0.0);
    assert!(l.l_fn.is_none());
}

#[test]
fn lipschitz_of_saturated_input() {
    let sys = with_input(Nonlinearity::Saturation { level: 1.0 });
    let l = estimate_lipschitz(&sys, 1.0, 3.0, 400, 17).unwrap();
    let f = l.l_fn.unwrap();
    for s in [0.5, 1.0, 1.5, 2.0, 2.5] {
        let exact = f64::min(s, 1.0);
        assert!((f.eval(s) - exact).abs() <= 0.05 * exact, "s = {s}: {}", f.eval(s));
    }
}

fn iss_inputs() -> Vec<InputSignal> {
    let mut v = vec![InputSignal::Zero { m: 1 }];
    for k in 1..=4 {
        let c = 0.25 * k as f64;
        v.push(InputSignal::Constant { value: dvector![c] });
    }
    v
}

#[test]
fn iss_gain_of_linear_system() {
    let sys = with_input(Nonlinearity::Identity);
    let xi = sample_shells(1, 1.0, &[0.1, 1.0], 10, &SamplerConfig::default(), 18).unwrap();
    let out = iss_probe(&sys, &xi, &iss_inputs(), 20.0, &IssOptions::default()).unwrap();
    let IssOutcome::Iss(e) = out else { panic!("{out:?}") };
    assert_eq!(e.gamma_family, "linear");
    assert!((0.95..=1.1).contains(&e.gamma_gain), "{}", e.gamma_gain);
    assert_eq!(e.violations, 0);
}

#[test]
fn iss_neutral_with_sinusoids() {
    let sys = NfdeSystem::new(
        DifferenceOperator::scalar(&[(1.0, 0.5)]).unwrap(),
        RhsMap::scalar(&[(0.0, -1.0)]).unwrap().with_input(dmatrix![1.0], Nonlinearity::Identity).unwrap(),
    )
    .unwrap();
    let xi = sample_shells(1, 1.0, &[1.0], 20, &SamplerConfig::default(), 19).unwrap();
    let inputs: Vec<InputSignal> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&w| InputSignal::Sinusoid { amplitude: dvector![1.0], omega: w, phase: 0.0 })
        .collect();
    let IssOutcome::Iss(e) = iss_probe(&sys, &xi, &inputs, 40.0, &IssOptions::default()).unwrap() else {
        panic!()
    };
    assert_eq!(e.violations, 0);
}

#[test]
fn iss_rejects_unstable_system() {
    let sys = NfdeSystem::new(
        DifferenceOperator::scalar(&[(1.0, 0.0)]).unwrap(),
        RhsMap::scalar(&[(0.0, 1.0)]).unwrap().with_input(dmatrix![1.0], Nonlinearity::Identity).unwrap(),
    )
    .unwrap();
    let xi = sample_shells(1, 1.0, &[1.0], 20, &SamplerConfig::default(), 20).unwrap();
    let out = iss_probe(&sys, &xi, &iss_inputs(), 40.0, &IssOptions::default()).unwrap();
    assert!(matches!(out, IssOutcome::NotIss { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn counterexamples_always_reverify(seed in 0u64..1000, a3 in 2.2f64..5.0) {
        let sys = neutral();
        let samples = sample_shells(1, 1.0, &[1.0], 10, &SamplerConfig::default(), seed).unwrap();
        let c = CertificateConstants::Ges { a1: 1.0, a2: 1.0, a3 };
        let opts = CheckOptions::default();
        let report = verify_ges_conditions(&sys, &quadratic(), &c, &samples, &opts).unwrap();
        for ce in &report.counterexamples {
            prop_assert!(ce.recheck(&sys, &quadratic(), &c, None, &opts).unwrap());
        }
    }

    #[test]
    fn ges_bound_holds_on_fitting_runs(seed in 0u64..1000) {
        let sys = neutral();
        let samples = sample_shells(1, 1.0, &[1.0, 3.0], 10, &SamplerConfig::default(), seed).unwrap();
        if let GesOutcome::Ges(g) = estimate_ges(&sys, &samples, 30.0, &GesOptions::default()).unwrap() {
            prop_assert_eq!(g.bound_violations, 0);
            prop_assert!(g.m_hat >= 1.0);
        } else {
            prop_assert!(false, "stable example reported as not GES");
        }
    }
}
