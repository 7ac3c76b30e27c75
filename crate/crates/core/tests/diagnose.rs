mod common;

use intervol::diagnose::*;
use intervol::dynamics::{ModelKind, ModelSpec, ParamVector};
use intervol::estimate::{fit_day, BoundRegime, FitOptions};
use intervol::sim::{simulate, SimSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn arch_lm_ignores_affine_rescaling(
        seed in any::<u64>(),
        scale in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
        shift in -100.0f64..100.0,
    ) {
        let r = common::normals(600, seed);
        let a = arch_lm(&r, ARCH_LM_LAGS).unwrap();
        let moved: Vec<f64> = r.iter().map(|v| scale * v + shift).collect();
        let b = arch_lm(&moved, ARCH_LM_LAGS).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn interval_scan_never_hits_the_floor(
        v in prop::collection::vec(-10i64..=10, 5..400),
        zero_share in 0.0f64..1.0,
    ) {
        let mut v = v;
        let k = (zero_share * v.len() as f64) as usize;
        v[..k].iter_mut().for_each(|y| *y = 0);
        // an all-zero day is maximized by a vanishing scale with likelihood exactly zero
        prop_assume!(v.iter().any(|&y| y != 0));
        let grid = log_grid(0.05, 50.0, 12);
        let scan = nu_scan(&common::series("d", v), &grid, LikelihoodKind::Interval).unwrap();
        prop_assert!(scan.floored.iter().all(|f| !f));
        prop_assert!(scan.loglik_avg.iter().all(|l| *l <= 0.0));
    }
}

#[test]
fn evaluation_leaves_the_fit_untouched() {
    let kind = ModelKind::IntervalT;
    let pv = ParamVector::new(kind, vec![-0.2, 1.0, 0.05, 0.9, 6.0]).unwrap();
    let (days, _) = simulate(&SimSpec::new(kind, pv, 1500, 2, 21)).unwrap();
    let fit =
        fit_day(&days[0], &ModelSpec::new(kind), &BoundRegime::unbounded(), None, &FitOptions::default()).unwrap();
    let before = serde_json::to_string(&fit).unwrap();
    let ev = evaluate_next_day(&fit, &days[1], None).unwrap();
    assert_eq!(serde_json::to_string(&fit).unwrap(), before);
    assert!(!ev.failed);
    assert!(ev.loglik_avg_oos.unwrap() < 0.0);
    assert!(ev.archlm_oos.unwrap() < 0.05);
    let again = evaluate_next_day(&fit, &days[1], None).unwrap();
    assert_eq!(ev, again);
}

#[test]
fn fitted_probabilities_track_the_histogram() {
    let kind = ModelKind::Skellam;
    let pv = ParamVector::new(kind, vec![-0.3, 1.5, 0.05, 0.9]).unwrap();
    let (days, _) = simulate(&SimSpec::new(kind, pv, 5000, 1, 4)).unwrap();
    let fit =
        fit_day(&days[0], &ModelSpec::new(kind), &BoundRegime::unbounded(), None, &FitOptions::default()).unwrap();
    let gaps = fitted_vs_observed(&fit, &days[0], None, -8..=8).unwrap();
    for g in &gaps {
        assert!((g.observed - g.fitted - g.difference).abs() < 1e-15);
        assert!(g.difference.abs() < 0.02, "{g:?}");
    }
    let mass: f64 = gaps.iter().map(|g| g.fitted).sum();
    assert!(mass > 0.99 && mass <= 1.0 + 1e-12);
}

#[test]
fn arch_lm_needs_enough_points() {
    assert!(arch_lm(&[1.0; 5], ARCH_LM_LAGS).is_none());
    assert_eq!(arch_lm(&vec![2.0; 100], ARCH_LM_LAGS), None);
}
