mod common;

use intervol::dynamics::*;
use proptest::prelude::*;

fn interval(theta: f64, omega: f64, alpha: f64, phi: f64, shape: Shape) -> ModelParams {
    ModelParams::Interval(IntervalModelParams { theta, omega, alpha, phi, shape })
}

fn any_params() -> impl Strategy<Value = ModelParams> {
    let shape = prop_oneof![
        Just(Shape::Normal),
        (1.0f64..30.0).prop_map(|nu| Shape::T { nu }),
        Just(Shape::Skellam),
        (0.0f64..0.6).prop_map(|pi| Shape::ZiSkellam { pi }),
    ];
    let int = (-0.8f64..0.8, 0.0f64..3.0, -0.1f64..0.15, 0.0f64..0.97, shape)
        .prop_map(|(t, o, a, p, s)| interval(t, o, a, p, s));
    let garch = (-0.5f64..0.5, 0.05f64..1.0, 0.0f64..0.3, 0.0f64..0.65, 2.5f64..30.0)
        .prop_map(|(mu, omega, alpha, phi, nu)| ModelParams::Garch(GarchParams { mu, omega, alpha, phi, nu }));
    let gas = (-0.5f64..0.5, -0.5f64..0.5, 0.0f64..0.2, 0.0f64..0.95, 2.5f64..30.0).prop_map(
        |(mu, omega, alpha, phi, nu)| {
            ModelParams::Gas(GasContParams { mu, omega, alpha, phi, nu }, GasRecursion::LogAr)
        },
    );
    prop_oneof![4 => int, 1 => garch, 1 => gas]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn state_carries_across_a_split(
        params in any_params(),
        y in prop::collection::vec(-12i64..=12, 2..300),
        cut in any::<prop::sample::Index>(),
    ) {
        let c = 1 + cut.index(y.len() - 1);
        let whole = filter_collect(&params, &y, None, None);
        prop_assume!(whole.is_ok());
        let (whole, _) = whole.unwrap();
        let (a, state) = filter_collect(&params, &y[..c], None, None).unwrap();
        let (b, _) = filter_collect(&params, &y[c..], None, Some(state)).unwrap();
        let joined: Vec<f64> = a.loglik_terms.iter().chain(&b.loglik_terms).copied().collect();
        let sig: Vec<f64> = a.sigma2_path.iter().chain(&b.sigma2_path).copied().collect();
        let mu: Vec<f64> = a.mu_path.iter().chain(&b.mu_path).copied().collect();
        for t in 0..y.len() {
            let (got, want) = (joined[t], whole.loglik_terms[t]);
            prop_assert!(got == want || (got - want).abs() <= 1e-12 * want.abs().max(1.0), "term {t}");
            prop_assert!((sig[t] - whole.sigma2_path[t]).abs() <= 1e-12 * whole.sigma2_path[t], "sigma2 {t}");
            prop_assert!((mu[t] - whole.mu_path[t]).abs() <= 1e-12, "mu {t}");
        }
    }

    #[test]
    fn location_stays_within_the_ma_bound(
        theta in -0.95f64..0.95,
        y in prop::collection::vec(-50i64..=50, 1..400),
    ) {
        let p = interval(theta, 1.0, 0.05, 0.9, Shape::T { nu: 4.0 });
        let (out, _) = filter_collect(&p, &y, None, None).unwrap();
        let bound = y.iter().map(|v| v.abs()).max().unwrap() as f64 * theta.abs() / (1.0 - theta.abs());
        for m in out.mu_path {
            prop_assert!(m.abs() <= bound * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn score_feedback_has_the_right_sign(
        omega in -1.0f64..3.0,
        alpha in 0.001f64..0.3,
        phi in 0.0f64..0.99,
        e0 in -2.0f64..2.0,
        nu in prop_oneof![Just(None), (0.5f64..40.0).prop_map(Some)],
    ) {
        let shape = nu.map_or(Shape::Normal, |nu| Shape::T { nu });
        let p = interval(0.0, omega, alpha, phi, shape);
        let init = FilterState { mu: 0.0, e: e0, sigma2: 1.0 };
        let far = {
            let mut s = Stepper::new(&p, Some(init), &[]).unwrap();
            let c = s.conditional(0.0).unwrap();
            let y = (11.0 * c.sigma2.sqrt()).ceil() as i64 + 1;
            s.observe(y, &c).unwrap();
            s.state().e
        };
        prop_assert!(far > phi * e0, "tail: {far} vs {}", phi * e0);
        let mut s = Stepper::new(&p, Some(init), &[]).unwrap();
        let c = s.conditional(0.0).unwrap();
        s.observe(0, &c).unwrap();
        prop_assert!(s.state().e < phi * e0);
    }

    #[test]
    fn wide_interval_t_tracks_the_continuous_filter(
        ln_sigma2 in 9.3f64..14.0,
        alpha in 0.0f64..0.1,
        phi in 0.0f64..0.98,
        nu in 3.0f64..30.0,
        seed in any::<u64>(),
    ) {
        let sd = (0.5 * ln_sigma2).exp();
        let y: Vec<i64> = common::normals(300, seed).iter().map(|z| (z * sd).round() as i64).collect();
        let int = IntervalModelParams { theta: 0.0, omega: ln_sigma2, alpha, phi, shape: Shape::T { nu } };
        let gas = GasContParams { mu: 0.0, omega: ln_sigma2 * (1.0 - phi), alpha, phi, nu };
        let s = common::series("d", y);
        let a = filter_interval(&s, &int, None).unwrap();
        let b = filter_gas_continuous(&s, &gas).unwrap();
        for t in 0..s.len() {
            let d = (a.sigma2_path[t].ln() - b.sigma2_path[t].ln()).abs();
            prop_assert!(d < 1e-3, "step {t}: {d}");
        }
    }
}

#[test]
fn level_recursion_differs_from_log_recursion() {
    let p = GasContParams { mu: 0.0, omega: 0.1, alpha: 0.05, phi: 0.5, nu: 5.0 };
    let s = common::series("d", vec![1, -2, 0, 3, 1]);
    let a = filter_gas_continuous_with(&s, &p, GasRecursion::LogAr).unwrap();
    let b = filter_gas_continuous_with(&s, &p, GasRecursion::Level).unwrap();
    assert_eq!(a.sigma2_path[0], b.sigma2_path[0]);
    assert!((a.sigma2_path[1] - b.sigma2_path[1]).abs() > 1e-6);
}

#[test]
fn underflow_makes_the_likelihood_minus_infinity() {
    let p = interval(0.0, 0.0, 0.05, 0.9, Shape::Normal);
    let (out, _) = filter_collect(&p, &[0, 1, 60, 0], None, None).unwrap();
    assert_eq!(out.underflow_count, 1);
    assert_eq!(out.loglik(), f64::NEG_INFINITY);
    assert!(out.sigma2_path.iter().all(|v| v.is_finite()));
}

#[test]
fn parameter_vector_checks_names_and_length() {
    assert!(ParamVector::new(ModelKind::Skellam, vec![0.0; 3]).is_err());
    let pv = ParamVector::new(ModelKind::IntervalT, vec![-0.3, 2.5, 0.05, 0.97, 8.0]).unwrap();
    assert_eq!(pv.get("nu"), Some(8.0));
    let bad = ParamVector::new(ModelKind::IntervalT, vec![-1.3, 2.5, 0.05, 0.97, 8.0]).unwrap();
    assert!(ModelParams::from_vector(&ModelKind::IntervalT.into(), &bad).is_err());
    for k in ModelKind::ALL {
        assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
    }
}
