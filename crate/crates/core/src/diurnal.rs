//! Intraday seasonality of the variance: squared changes are averaged in
//! time-of-day bins, smoothed with a cubic smoothing spline whose penalty is
//! picked by generalized cross-validation, floored and normalized to a
//! session mean of one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ChangeSeries, SESSION_SECONDS};

pub const DEFAULT_BIN_WIDTH: f64 = 300.0;
pub const DEFAULT_FLOOR: f64 = 1e-6;
/// Weight on the smoother's degrees of freedom in the GCV score.
pub const GCV_DF_INFLATION: f64 = 1.4;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileData {
    knots: Vec<f64>,
    values: Vec<f64>,
    floor: f64,
}

/// Natural cubic spline through `(knots, values)`, evaluated with a floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileData", into = "ProfileData")]
pub struct DiurnalProfile {
    knots: Vec<f64>,
    values: Vec<f64>,
    floor: f64,
    second: Vec<f64>,
}

impl TryFrom<ProfileData> for DiurnalProfile {
    type Error = Error;
    fn try_from(d: ProfileData) -> Result<Self> {
        DiurnalProfile::from_knots(d.knots, d.values, d.floor)
    }
}

impl From<DiurnalProfile> for ProfileData {
    fn from(p: DiurnalProfile) -> Self {
        ProfileData { knots: p.knots, values: p.values, floor: p.floor }
    }
}

impl DiurnalProfile {
    pub fn from_knots(knots: Vec<f64>, values: Vec<f64>, floor: f64) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::domain("profile needs at least two knots with one value each"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("profile knots must be strictly increasing"));
        }
        if !(floor > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("profile floor must be positive and values finite"));
        }
        let second = natural_second_derivatives(&knots, &values);
        Ok(DiurnalProfile { knots, values, floor, second })
    }

    /// The constant profile `s = 1`.
    pub fn flat() -> Self {
        DiurnalProfile::from_knots(vec![0.0, SESSION_SECONDS], vec![1.0, 1.0], DEFAULT_FLOOR).unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Profile value at `time_of_day` seconds since the open.
    pub fn eval(&self, time_of_day: f64) -> Result<f64> {
        if !(0.0..=SESSION_SECONDS).contains(&time_of_day) {
            return Err(Error::domain(format!("time {time_of_day} s is outside the session")));
        }
        Ok(self.spline(time_of_day).max(self.floor))
    }

    /// `ln s` at every stamp of `series`.
    pub fn ln_values(&self, series: &ChangeSeries) -> Result<Vec<f64>> {
        series.time_of_day.iter().map(|&t| self.eval(t).map(f64::ln)).collect()
    }

    fn spline(&self, t: f64) -> f64 {
        let (x, y, m) = (&self.knots, &self.values, &self.second);
        let n = x.len();
        if t <= x[0] {
            let slope = (y[1] - y[0]) / (x[1] - x[0]) - (x[1] - x[0]) * m[1] / 6.0;
            return y[0] + slope * (t - x[0]);
        }
        if t >= x[n - 1] {
            let h = x[n - 1] - x[n - 2];
            let slope = (y[n - 1] - y[n - 2]) / h + h * m[n - 2] / 6.0;
            return y[n - 1] + slope * (t - x[n - 1]);
        }
        let i = x.partition_point(|&k| k <= t).saturating_sub(1).min(n - 2);
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    }
}

/// Second derivatives of the natural cubic interpolant (zero at both ends).
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Options for [`estimate_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub bin_width: f64,
    pub floor: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { bin_width: DEFAULT_BIN_WIDTH, floor: DEFAULT_FLOOR }
    }
}

/// Estimates the profile from one day or several pooled days.
pub fn estimate_profile(days: &[ChangeSeries], opts: &ProfileOptions) -> Result<DiurnalProfile> {
    let unnormalized = estimate_unnormalized(days, opts)?;
    normalize(&unnormalized)
}

/// Smoothed squared-change level before normalization, in cents squared.
pub fn estimate_unnormalized(days: &[ChangeSeries], opts: &ProfileOptions) -> Result<DiurnalProfile> {
    if !(opts.bin_width > 0.0 && opts.bin_width <= SESSION_SECONDS) {
        return Err(Error::domain(format!("bin width {} s is outside (0, session]", opts.bin_width)));
    }
    let bins = (SESSION_SECONDS / opts.bin_width).ceil() as usize;
    if bins < 4 {
        return Err(Error::domain("profile needs at least four bins"));
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for s in days {
        for (&c, &t) in s.changes.iter().zip(&s.time_of_day) {
            let b = ((t / opts.bin_width).ceil() as usize).saturating_sub(1).min(bins - 1);
            sums[b] += (c * c) as f64;
            counts[b] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InsufficientData("no observations for the diurnal profile".into()));
    }
    let filled = fill_empty_bins(&sums, &counts);
    let centers: Vec<f64> = (0..bins)
        .map(|i| {
            let lo = i as f64 * opts.bin_width;
            0.5 * (lo + (lo + opts.bin_width).min(SESSION_SECONDS))
        })
        .collect();
    let mean_count = counts.iter().sum::<usize>() as f64 / bins as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64) / mean_count).collect();

    let fitted = smoothing_spline_gcv(&centers, &filled, &weights)?;

    // extend linearly to the session edges so the knots cover the session
    let mut knots = Vec::with_capacity(bins + 2);
    let mut values = Vec::with_capacity(bins + 2);
    let interior = DiurnalProfile::from_knots(centers.clone(), fitted.clone(), opts.floor)?;
    if centers[0] > 0.0 {
        knots.push(0.0);
        values.push(interior.spline(0.0));
    }
    knots.extend(&centers);
    values.extend(&fitted);
    if *centers.last().unwrap() < SESSION_SECONDS {
        knots.push(SESSION_SECONDS);
        values.push(interior.spline(SESSION_SECONDS));
    }
    for v in values.iter_mut() {
        *v = v.max(opts.floor);
    }
    DiurnalProfile::from_knots(knots, values, opts.floor)
}

/// Grid used for normalization: every second of the session.
pub fn normalization_grid() -> impl Iterator<Item = f64> {
    (0..=SESSION_SECONDS as usize).map(|s| s as f64)
}

fn normalize(p: &DiurnalProfile) -> Result<DiurnalProfile> {
    let (sum, n) = normalization_grid().fold((0.0, 0usize), |(s, n), t| (s + p.eval(t).unwrap(), n + 1));
    let mean = sum / n as f64;
    DiurnalProfile::from_knots(p.knots.clone(), p.values.iter().map(|v| v / mean).collect(), p.floor / mean)
}

fn fill_empty_bins(sums: &[f64], counts: &[usize]) -> Vec<f64> {
    let occupied: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    (0..counts.len())
        .map(|i| {
            let j = if counts[i] > 0 {
                i
            } else {
                *occupied.iter().min_by_key(|&&j| (j as i64 - i as i64).unsigned_abs()).unwrap()
            };
            sums[j] / counts[j] as f64
        })
        .collect()
}

/// Weighted cubic smoothing spline with the penalty chosen by GCV.
///
/// Returns fitted values at `x`.
pub fn smoothing_spline_gcv(x: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::domain("smoothing spline needs at least four points"));
    }
    // work on the unit interval so the penalty grid is scale-free
    let span = x[n - 1] - x[0];
    let u: Vec<f64> = x.iter().map(|v| (v - x[0]) / span).collect();
    let sys = SplineSystem::new(&u, w);

    let gcv = |log_lambda: f64| sys.fit(y, 10f64.powf(log_lambda)).map(|(_, g)| g).unwrap_or(f64::INFINITY);
    let grid: Vec<f64> = (0..=80).map(|i| -12.0 + 0.2 * i as f64).collect();
    let scores: Vec<f64> = grid.iter().map(|&l| gcv(l)).collect();
    let best = (0..grid.len()).min_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();

    // parabolic refinement on the coarse grid, then once more on a fine one;
    // unlike a bracketing search this moves smoothly with the scores
    let mut log_lambda = grid[best];
    if best > 0 && best + 1 < grid.len() {
        log_lambda = vertex(log_lambda, 0.2, [scores[best - 1], scores[best], scores[best + 1]]);
        let h = 0.02;
        let fine = [gcv(log_lambda - h), gcv(log_lambda), gcv(log_lambda + h)];
        let refined = vertex(log_lambda, h, fine);
        if gcv(refined) <= fine[1] {
            log_lambda = refined;
        }
    }
    let (fitted, _) = sys.fit(y, 10f64.powf(log_lambda))?;
    Ok(fitted)
}

/// Minimum of the parabola through `(x - h, x, x + h)`, kept within `[x - h, x + h]`.
fn vertex(x: f64, h: f64, f: [f64; 3]) -> f64 {
    let curvature = f[0] - 2.0 * f[1] + f[2];
    if !(curvature > 0.0) || !f.iter().all(|v| v.is_finite()) {
        return x;
    }
    x + (0.5 * h * (f[0] - f[2]) / curvature).clamp(-h, h)
}

/// Reinsch form: fitted `g = y - lambda W^-1 Q gamma`, `(R + lambda Q' W^-1 Q) gamma = Q' y`.
struct SplineSystem {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qt_winv_q: DMatrix<f64>,
    winv: DVector<f64>,
}

impl SplineSystem {
    fn new(x: &[f64], w: &[f64]) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
        let mut q = DMatrix::zeros(n, n - 2);
        let mut r = DMatrix::zeros(n - 2, n - 2);
        for k in 0..n - 2 {
            let j = k + 1;
            q[(j - 1, k)] = 1.0 / h[j - 1];
            q[(j, k)] = -1.0 / h[j - 1] - 1.0 / h[j];
            q[(j + 1, k)] = 1.0 / h[j];
            r[(k, k)] = (h[j - 1] + h[j]) / 3.0;
            if k + 1 < n - 2 {
                r[(k, k + 1)] = h[j] / 6.0;
                r[(k + 1, k)] = h[j] / 6.0;
            }
        }
        let winv = DVector::from_iterator(n, w.iter().map(|v| 1.0 / v));
        let winv_q = DMatrix::from_fn(n, n - 2, |i, k| winv[i] * q[(i, k)]);
        let qt_winv_q = q.transpose() * &winv_q;
        SplineSystem { q, r, qt_winv_q, winv }
    }

    /// Fitted values and the GCV score with inflated degrees of freedom.
    fn fit(&self, y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
        let n = y.len();
        let m = &self.r + &self.qt_winv_q * lambda;
        let chol = m.cholesky().ok_or_else(|| Error::domain("smoothing spline system is not positive definite"))?;
        let yv = DVector::from_column_slice(y);
        let gamma = chol.solve(&(self.q.transpose() * &yv));
        let correction = &self.q * gamma;
        let fitted: Vec<f64> = (0..n).map(|i| y[i] - lambda * self.winv[i] * correction[i]).collect();
        // trace of the hat matrix: n - lambda tr(M^-1 Q' W^-1 Q)
        let inner = chol.solve(&self.qt_winv_q);
        let trace = n as f64 - lambda * inner.trace();
        let rss: f64 = (0..n).map(|i| (y[i] - fitted[i]).powi(2) / self.winv[i]).sum();
        let denom = 1.0 - GCV_DF_INFLATION * trace / n as f64;
        let score = if denom > 0.0 { rss / n as f64 / (denom * denom) } else { f64::INFINITY };
        Ok((fitted, score))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knots_are_reproduced_exactly() {
        let p = DiurnalProfile::from_knots(vec![0.0, 100.0, 250.0, 23_400.0], vec![2.0, 1.0, 1.5, 0.8], 1e-6).unwrap();
        for (k, v) in p.knots().iter().zip(p.values()) {
            assert_eq!(p.eval(*k).unwrap(), *v);
        }
    }

    #[test]
    fn flat_segment_stays_flat() {
        let p = DiurnalProfile::from_knots(vec![0.0, 10.0, 20.0, 30.0, 23_400.0], vec![1.0, 1.0, 1.0, 1.0, 1.0], 1e-6)
            .unwrap();
        assert!((p.eval(15.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_segment_has_small_overshoot() {
        // fixed fixture: decaying open then rising close
        let knots = vec![0.0, 1800.0, 3600.0, 7200.0, 12_600.0, 18_000.0, 21_600.0, 23_400.0];
        let values = vec![2.6, 1.8, 1.3, 0.9, 0.75, 0.85, 1.1, 1.6];
        let p = DiurnalProfile::from_knots(knots.clone(), values.clone(), 1e-6).unwrap();
        for i in 0..knots.len() - 1 {
            let (a, b) = (values[i], values[i + 1]);
            if a == b {
                continue;
            }
            let range = (b - a).abs();
            for s in 1..100 {
                let t = knots[i] + (knots[i + 1] - knots[i]) * s as f64 / 100.0;
                let v = p.eval(t).unwrap();
                assert!(v >= a.min(b) - 0.1 * range && v <= a.max(b) + 0.1 * range, "t={t} v={v}");
            }
        }
    }

    #[test]
    fn outside_session_is_rejected() {
        let p = DiurnalProfile::flat();
        assert!(p.eval(-1.0).is_err());
        assert!(p.eval(SESSION_SECONDS + 1.0).is_err());
    }

    #[test]
    fn floor_binds() {
        let p = DiurnalProfile::from_knots(vec![0.0, 100.0, 23_400.0], vec![1.0, -5.0, 1.0], 0.01).unwrap();
        assert_eq!(p.eval(100.0).unwrap(), 0.01);
    }

    #[test]
    fn smoothing_spline_reproduces_a_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let g = smoothing_spline_gcv(&x, &y, &[1.0; 20]).unwrap();
        for (a, b) in g.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn serde_round_trip_recomputes_spline() {
        let p = DiurnalProfile::from_knots(vec![0.0, 500.0, 9000.0, 23_400.0], vec![3.0, 1.0, 0.7, 1.4], 1e-6).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"knots\""));
        let back: DiurnalProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn empty_bins_take_nearest_neighbor() {
        let v = fill_empty_bins(&[0.0, 4.0, 0.0, 0.0, 9.0], &[0, 2, 0, 0, 3]);
        assert_eq!(v, vec![2.0, 2.0, 2.0, 3.0, 3.0]);
    }
}
