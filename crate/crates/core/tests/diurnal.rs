mod common;

use intervol::diurnal::*;
use intervol::pipeline::ChangeSeries;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Days with a U-shaped intraday variance and occasional empty stretches.
fn u_shaped_days(days: usize, freq: f64, seed: u64) -> Vec<ChangeSeries> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = (23_400.0 / freq) as usize;
    (0..days)
        .map(|d| {
            let changes = (1..=n)
                .map(|i| {
                    let u = i as f64 * freq / 23_400.0;
                    let sd = 1.0 + 3.0 * (2.0 * u - 1.0).powi(2);
                    (rng.sample::<f64, _>(rand_distr::StandardNormal) * sd).round() as i64
                })
                .collect();
            ChangeSeries::regular(format!("2024-01-{:02}", d + 2), freq, changes)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn integer_rescaling_only_scales_the_raw_profile(c in 2i64..12, seed in any::<u64>()) {
        let days = u_shaped_days(2, 30.0, seed);
        let scaled: Vec<ChangeSeries> = days
            .iter()
            .map(|d| ChangeSeries { changes: d.changes.iter().map(|v| v * c).collect(), ..d.clone() })
            .collect();
        let opts = ProfileOptions::default();
        let raw = estimate_unnormalized(&days, &opts).unwrap();
        let raw_c = estimate_unnormalized(&scaled, &opts).unwrap();
        let c2 = (c * c) as f64;
        for t in [1.0, 600.0, 4000.0, 11_700.0, 20_000.0, 23_400.0] {
            let (a, b) = (raw.eval(t).unwrap(), raw_c.eval(t).unwrap());
            if a > 10.0 * raw.floor() {
                prop_assert!((b / (c2 * a) - 1.0).abs() < 1e-8, "t={t}: {a} {b}");
            }
        }
        let norm = estimate_profile(&days, &opts).unwrap();
        let norm_c = estimate_profile(&scaled, &opts).unwrap();
        for t in [1.0, 600.0, 4000.0, 11_700.0, 20_000.0, 23_400.0] {
            prop_assert!((norm.eval(t).unwrap() - norm_c.eval(t).unwrap()).abs() < 1e-9, "t={t} {} {}", norm.eval(t).unwrap(), norm_c.eval(t).unwrap());
        }
    }

    #[test]
    fn log_factors_are_always_finite(seed in any::<u64>(), zeros in 0.0f64..1.0) {
        let mut days = u_shaped_days(1, 60.0, seed);
        let cut = (zeros * days[0].len() as f64) as usize;
        days[0].changes[..cut].iter_mut().for_each(|v| *v = 0);
        let p = estimate_profile(&days, &ProfileOptions::default());
        if let Ok(p) = p {
            prop_assert!(p.ln_values(&days[0]).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn profile_has_unit_mean_and_u_shape() {
    let days = u_shaped_days(5, 5.0, 3);
    let p = estimate_profile(&days, &ProfileOptions::default()).unwrap();
    let grid: Vec<f64> = normalization_grid().collect();
    let mean = grid.iter().map(|&t| p.eval(t).unwrap()).sum::<f64>() / grid.len() as f64;
    assert!((mean - 1.0).abs() < 1e-9, "{mean}");
    let (open, mid, close) = (p.eval(300.0).unwrap(), p.eval(11_700.0).unwrap(), p.eval(23_100.0).unwrap());
    assert!(open > 2.0 * mid && close > 2.0 * mid, "{open} {mid} {close}");
}

#[test]
fn all_zero_days_fall_back_to_the_floor() {
    let days = vec![ChangeSeries::regular("d", 60.0, vec![0; 390])];
    match estimate_profile(&days, &ProfileOptions::default()) {
        Ok(p) => {
            let ln = p.ln_values(&days[0]).unwrap();
            assert!(ln.iter().all(|v| v.is_finite()));
        }
        Err(e) => assert!(e.to_string().contains("zero") || e.to_string().contains("insufficient"), "{e}"),
    }
}

#[test]
fn profile_survives_serialization() {
    let days = u_shaped_days(2, 60.0, 1);
    let p = estimate_profile(&days, &ProfileOptions::default()).unwrap();
    let back: DiurnalProfile = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    for t in [0.0, 17.0, 9000.0, 23_400.0] {
        assert_eq!(p.eval(t).unwrap(), back.eval(t).unwrap());
    }
    assert!(p.eval(23_401.0).is_err());
}
