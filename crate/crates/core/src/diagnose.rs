//! Residual diagnostics, next-day evaluation, the degrees-of-freedom scan
//! and fitted-versus-observed frequencies.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::interval_prob;
use crate::dist::{
    interval_eval, scaled_ln_density, skellam_eval, zi_skellam_eval, Kernel, SkellamParams, StudentT, ZiSkellamParams,
};
use crate::diurnal::DiurnalProfile;
use crate::dynamics::{filter_collect, FilterOutput, ModelParams, Shape, SIGMA2_FLOOR};
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::pipeline::ChangeSeries;

pub const ARCH_LM_LAGS: usize = 10;

/// R² of regressing squared demeaned residuals on an intercept and their own lags.
///
/// `None` when the squared residuals are constant or the series is too short.
pub fn arch_lm(residuals: &[f64], lags: usize) -> Option<f64> {
    if lags == 0 || residuals.len() <= lags + 1 || residuals.iter().any(|r| !r.is_finite()) {
        return None;
    }
    let center = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let mut sq: Vec<f64> = residuals.iter().map(|r| (r - center).powi(2)).collect();
    let level = sq.iter().sum::<f64>() / sq.len() as f64;
    if !(level > 0.0) {
        return None;
    }
    sq.iter_mut().for_each(|v| *v /= level);
    let rows = sq.len() - lags;
    // centered regression; the intercept drops out
    let target: Vec<f64> = sq[lags..].to_vec();
    let t_mean = target.iter().sum::<f64>() / rows as f64;
    let sst: f64 = target.iter().map(|v| (v - t_mean).powi(2)).sum();
    if !(sst > 0.0) {
        return None;
    }
    let mut x = DMatrix::zeros(rows, lags);
    for j in 0..lags {
        let col = &sq[lags - 1 - j..sq.len() - 1 - j];
        let m = col.iter().sum::<f64>() / rows as f64;
        for i in 0..rows {
            x[(i, j)] = col[i] - m;
        }
    }
    let yv = DVector::from_iterator(rows, target.iter().map(|v| v - t_mean));
    let qr = x.clone().qr();
    let r = qr.r();
    let r_max = r.diagonal().amax();
    let beta = if r.diagonal().iter().all(|d| d.abs() > 1e-10 * r_max) {
        r.solve_upper_triangular(&(qr.q().transpose() * &yv))?
    } else {
        let svd = x.clone().svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        svd.solve(&yv, cutoff).ok()?
    };
    let fitted = &x * beta;
    let ssr = (&yv - fitted).norm_squared();
    Some((1.0 - ssr / sst).clamp(0.0, 1.0))
}

/// `(y - mean) / sd` under each step's conditional distribution, or `None`
/// when the conditional variance does not exist.
pub fn standardized_residuals(out: &FilterOutput, y: &[i64], params: &ModelParams) -> Option<Vec<f64>> {
    let t_factor = |nu: f64| if nu > 2.0 { Some(nu / (nu - 2.0)) } else { None };
    let n = y.len().min(out.len());
    let mut r = Vec::with_capacity(n);
    match params {
        ModelParams::Garch(p) => {
            let k = t_factor(p.nu)?;
            for t in 0..n {
                r.push((y[t] as f64 - out.mu_path[t]) / (out.sigma2_path[t] * k).sqrt());
            }
        }
        ModelParams::Gas(p, _) => {
            let k = t_factor(p.nu)?;
            for t in 0..n {
                r.push((y[t] as f64 - out.mu_path[t]) / (out.sigma2_path[t] * k).sqrt());
            }
        }
        ModelParams::Static(p) => {
            let k = t_factor(p.nu)?;
            for t in 0..n {
                r.push(y[t] as f64 / (out.sigma2_path[t] * k).sqrt());
            }
        }
        ModelParams::Interval(p) => {
            let k = match p.shape {
                Shape::T { nu } => t_factor(nu)?,
                _ => 1.0,
            };
            for t in 0..n {
                let (mu, s2) = (out.mu_path[t], out.sigma2_path[t]);
                let (mean, var) = match p.shape {
                    Shape::ZiSkellam { pi } => ZiSkellamParams { base: SkellamParams { mu, sigma2: s2 }, pi }.moments(),
                    _ => (mu, s2 * k),
                };
                r.push((y[t] as f64 - mean) / var.sqrt());
            }
        }
    }
    Some(r)
}

/// Out-of-sample evaluation of a frozen fit on the following day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub day: String,
    pub loglik_avg_oos: Option<f64>,
    pub archlm_oos: Option<f64>,
    /// Some observation had numerically zero probability.
    pub failed: bool,
    pub underflow_count: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Filters `next_day` with the fit's parameters, starting from long-run values.
pub fn evaluate_next_day(
    fit: &FitResult,
    next_day: &ChangeSeries,
    s_hat: Option<&DiurnalProfile>,
) -> Result<EvalResult> {
    if !fit.converged {
        return Err(Error::domain(format!("fit for {} did not converge", fit.day)));
    }
    let params = fit.model_params()?;
    let ln_s = match (fit.spec.kind.is_discrete(), s_hat) {
        (true, Some(s)) => Some(s.ln_values(next_day)?),
        _ => None,
    };
    let mut result = EvalResult {
        day: next_day.day.clone(),
        loglik_avg_oos: None,
        archlm_oos: None,
        failed: true,
        underflow_count: 0,
        n: next_day.len(),
        message: None,
    };
    let out = match filter_collect(&params, &next_day.changes, ln_s.as_deref(), None) {
        Ok((out, _)) => out,
        Err(e @ (Error::ScoreUndefined { .. } | Error::FilterDiverged { .. })) => {
            result.message = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.underflow_count = out.underflow_count;
    result.failed = out.underflow_count > 0;
    if !result.failed {
        result.loglik_avg_oos = Some(out.loglik() / next_day.len().max(1) as f64);
    }
    result.archlm_oos =
        standardized_residuals(&out, &next_day.changes, &params).and_then(|r| arch_lm(&r, ARCH_LM_LAGS));
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    ContinuousDensity,
    Interval,
}

impl std::str::FromStr for LikelihoodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "continuous_density" | "continuous" | "density" => Ok(LikelihoodKind::ContinuousDensity),
            "interval" => Ok(LikelihoodKind::Interval),
            other => Err(Error::domain(format!("unknown likelihood kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LikelihoodKind::ContinuousDensity => "continuous_density",
            LikelihoodKind::Interval => "interval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuScanResult {
    pub kind: LikelihoodKind,
    pub nu_grid: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
    pub loglik_avg: Vec<f64>,
    pub floored: Vec<bool>,
}

impl NuScanResult {
    /// Index of the largest average log-likelihood.
    pub fn argmax(&self) -> Option<usize> {
        (0..self.loglik_avg.len()).max_by(|&a, &b| self.loglik_avg[a].total_cmp(&self.loglik_avg[b]))
    }
}

/// Logarithmically spaced grid of `points` values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

pub fn default_nu_grid() -> Vec<f64> {
    log_grid(0.05, 50.0, 40)
}

fn static_loglik_avg(counts: &BTreeMap<i64, f64>, n: f64, kind: LikelihoodKind, t: &StudentT, sigma2: f64) -> f64 {
    let kernel = Kernel::StudentT(*t);
    let mut total = 0.0;
    for (&k, &c) in counts {
        let term = match kind {
            LikelihoodKind::ContinuousDensity => scaled_ln_density(t, k as f64, sigma2),
            LikelihoodKind::Interval => interval_eval(&kernel, k as f64, sigma2).ln_prob,
        };
        total += c * term;
    }
    total / n
}

/// Profiles the static, zero-location t likelihood over the degrees of freedom.
///
/// For each `nu` the scale is maximized over `ln sigma2`, floored at `2^-1074`.
pub fn nu_scan(y: &ChangeSeries, nu_grid: &[f64], kind: LikelihoodKind) -> Result<NuScanResult> {
    if y.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
    for &v in &y.changes {
        *counts.entry(v).or_default() += 1.0;
    }
    let n = y.len() as f64;
    let second = y.changes.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n;
    let lo = SIGMA2_FLOOR.ln();
    let hi = second.max(1.0).ln() + 12.0;
    let mut out =
        NuScanResult { kind, nu_grid: nu_grid.to_vec(), sigma2_hat: vec![], loglik_avg: vec![], floored: vec![] };
    for &nu in nu_grid {
        let t = StudentT::new(nu)?;
        let g = |l: f64| {
            let v = static_loglik_avg(&counts, n, kind, &t, l.exp().max(SIGMA2_FLOOR));
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let points = 400;
        let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&l| g(l)).collect();
        let best = (0..points).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let (l, v) = golden_max(&g, grid[best.saturating_sub(1)], grid[(best + 1).min(points - 1)]);
        let (mut l, mut v) = if v >= vals[best] { (l, v) } else { (grid[best], vals[best]) };
        let at_floor = g(lo);
        if at_floor >= v {
            l = lo;
            v = at_floor;
        }
        let sigma2 = l.exp().max(SIGMA2_FLOOR);
        out.sigma2_hat.push(sigma2);
        out.loglik_avg.push(v);
        out.floored.push(sigma2 <= SIGMA2_FLOOR);
    }
    Ok(out)
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Observed frequency, mean fitted probability and their difference at one integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGap {
    pub k: i64,
    pub observed: f64,
    pub fitted: f64,
    pub difference: f64,
}

/// Probability of integer `k` under one step's conditional distribution.
pub fn step_probability(params: &ModelParams, mu: f64, sigma2: f64, k: i64) -> Result<f64> {
    Ok(match params {
        ModelParams::Garch(p) => interval_prob(&Kernel::StudentT(StudentT::new(p.nu)?), k, mu, sigma2),
        ModelParams::Gas(p, _) => interval_prob(&Kernel::StudentT(StudentT::new(p.nu)?), k, mu, sigma2),
        ModelParams::Static(p) => interval_prob(&Kernel::StudentT(StudentT::new(p.nu)?), k, mu, sigma2),
        ModelParams::Interval(p) => match p.shape {
            Shape::Normal => interval_prob(&Kernel::Normal, k, mu, sigma2),
            Shape::T { nu } => interval_prob(&Kernel::StudentT(StudentT::new(nu)?), k, mu, sigma2),
            Shape::Skellam => skellam_eval(k, &SkellamParams { mu, sigma2 }, false).ln_pmf.exp(),
            Shape::ZiSkellam { pi } => {
                zi_skellam_eval(k, &ZiSkellamParams { base: SkellamParams { mu, sigma2 }, pi }, false).ln_pmf.exp()
            }
        },
    })
}

/// Empirical frequency minus mean fitted probability for each `k` in `support`.
pub fn fitted_vs_observed(
    fit: &FitResult,
    y: &ChangeSeries,
    s_hat: Option<&DiurnalProfile>,
    support: RangeInclusive<i64>,
) -> Result<Vec<FrequencyGap>> {
    let params = fit.model_params()?;
    let ln_s = match (fit.spec.kind.is_discrete(), s_hat) {
        (true, Some(s)) => Some(s.ln_values(y)?),
        _ => None,
    };
    let (out, _) = filter_collect(&params, &y.changes, ln_s.as_deref(), None)?;
    fitted_vs_observed_paths(&params, &y.changes, &out.mu_path, &out.sigma2_path, support)
}

pub(crate) fn fitted_vs_observed_paths(
    params: &ModelParams,
    y: &[i64],
    mu: &[f64],
    sigma2: &[f64],
    support: RangeInclusive<i64>,
) -> Result<Vec<FrequencyGap>> {
    let n = y.len().max(1) as f64;
    let mut gaps = Vec::new();
    for k in support {
        let observed = y.iter().filter(|&&v| v == k).count() as f64 / n;
        let mut fitted = 0.0;
        for t in 0..y.len() {
            fitted += step_probability(params, mu[t], sigma2[t], k)?;
        }
        fitted /= n;
        gaps.push(FrequencyGap { k, observed, fitted, difference: observed - fitted });
    }
    Ok(gaps)
}
