#![allow(dead_code)]

use intervol::pipeline::ChangeSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Derivative of `f` at `x` by Richardson-extrapolated central differences.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + 2.0 * h) - f(x - 2.0 * h)) / (4.0 * h);
    (4.0 * d1 - d2) / 3.0
}

/// Relative error with the reference magnitude floored at `floor`.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Integer changes with the given share of zeros and the rest spread over
/// 1..=10 in either direction with geometric weights.
pub fn zero_heavy(n: usize, zero_share: f64, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.gen::<f64>() < zero_share {
                return 0;
            }
            let mut m = 1;
            while m < 10 && rng.gen::<f64>() < 0.45 {
                m += 1;
            }
            if rng.gen() {
                m
            } else {
                -m
            }
        })
        .collect()
}

pub fn series(day: &str, v: Vec<i64>) -> ChangeSeries {
    ChangeSeries::regular(day, 1.0, v)
}

/// Standard normal draws.
pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}
