//! Maximum-likelihood estimation of the filters in [`crate::dynamics`].

mod optim;
mod transform;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{optimize, OptimOptions, OptimResult};
pub use transform::{BoundRegime, ParamMap, OMEGA_LOWER};

use crate::diagnose::{arch_lm, standardized_residuals, ARCH_LM_LAGS};
use crate::diurnal::DiurnalProfile;
use crate::dynamics::{filter_collect, loglik_sum, ModelKind, ModelParams, ModelSpec, ParamVector, SIGMA2_FLOOR};
use crate::error::{Error, Result};
use crate::pipeline::ChangeSeries;

pub const DEFAULT_MIN_LEN: usize = 50;

/// Tolerance, per observation, for accepting a parameter placed on its bound.
const SNAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_len: usize,
    /// How many of the fixed starting points to screen (at most 5).
    pub starts: usize,
    /// Simplex evaluations spent screening each start.
    pub screen_evals: usize,
    pub optim: OptimOptions,
    /// For the zero-inflated Skellam, add the fitted plain Skellam as a start.
    pub nested_start: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_len: DEFAULT_MIN_LEN,
            starts: 5,
            screen_evals: 60,
            optim: OptimOptions::default(),
            nested_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub day: String,
    pub spec: ModelSpec,
    pub regime: BoundRegime,
    pub params: ParamVector,
    pub loglik_avg: f64,
    pub loglik_total: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective_evals: usize,
    pub at_bound: Vec<String>,
    pub sigma2_floored: bool,
    /// Steps where a scale floor was applied along the fitted path.
    pub floored_steps: usize,
    /// In-sample ARCH-LM R², when residual moments exist.
    pub archlm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl FitResult {
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::from_vector(&self.spec, &self.params)
    }
}

struct Problem<'a> {
    spec: ModelSpec,
    map: ParamMap,
    y: &'a [i64],
    ln_s: Option<&'a [f64]>,
}

impl Problem<'_> {
    fn params(&self, x: &[f64]) -> Result<ModelParams> {
        let v = ParamVector::new(self.spec.kind, self.map.untransform(x))?;
        ModelParams::from_vector(&self.spec, &v)
    }

    /// Negative average log-likelihood; `+inf` wherever it is undefined.
    fn objective(&self, x: &[f64]) -> f64 {
        match self.params(x).and_then(|p| loglik_sum(&p, self.y, self.ln_s)) {
            Ok(ll) if ll.total.is_finite() => -ll.avg,
            _ => f64::INFINITY,
        }
    }
}

fn sample_moments(y: &[i64]) -> (f64, f64) {
    let n = y.len().max(1) as f64;
    let mean = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = y.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(1e-4))
}

/// The five fixed starting points in constrained space.
fn fixed_starts(kind: ModelKind, y: &[i64], regime: &BoundRegime) -> Vec<Vec<f64>> {
    let (mean, var) = sample_moments(y);
    let lv = var.ln();
    let nu_lo = regime.nu_floor();
    let nu = |v: f64| v.max(nu_lo + 0.5);
    let alpha = |a: f64| if regime.alpha_nonneg { a.max(1e-3) } else { a };
    // (theta, omega shift, alpha, phi, nu, pi)
    let grid: [(f64, f64, f64, f64, f64, f64); 5] = [
        (0.0, 0.0, 0.05, 0.9, 6.0, 0.1),
        (-0.3, 0.0, 0.1, 0.97, 12.0, 0.3),
        (0.2, -1.0, 0.02, 0.5, 3.0, 0.05),
        (-0.1, 0.5, 0.2, 0.98, 30.0, 0.5),
        (-0.5, 0.0, 0.01, 0.0, 4.0, 0.2),
    ];
    grid.iter()
        .map(|&(theta, shift, a, phi, v, pi)| match kind {
            ModelKind::GarchT => {
                let (a, phi) = (a.max(0.01), phi.clamp(0.01, 0.97 - a.max(0.01)));
                vec![mean, var * (1.0 - a - phi), a, phi, nu(v)]
            }
            ModelKind::GasT => vec![mean, (lv + shift) * (1.0 - phi), alpha(a), phi, nu(v)],
            ModelKind::StaticT => vec![var * shift.exp(), nu(v)],
            ModelKind::IntervalNormal | ModelKind::Skellam => vec![theta, lv + shift, alpha(a), phi],
            ModelKind::IntervalT => vec![theta, lv + shift, alpha(a), phi, nu(v)],
            ModelKind::ZiSkellam => vec![theta, lv + shift, alpha(a), phi, pi],
        })
        .collect()
}

/// Fits one model to one day by maximum likelihood.
pub fn fit_day(
    y: &ChangeSeries,
    spec: &ModelSpec,
    regime: &BoundRegime,
    s_hat: Option<&DiurnalProfile>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if y.len() < opts.min_len {
        return Err(Error::InsufficientData(format!(
            "day {} has {} observations, need at least {}",
            y.day,
            y.len(),
            opts.min_len
        )));
    }
    let ln_s = match (spec.kind.is_discrete(), s_hat) {
        (true, Some(s)) => Some(s.ln_values(y)?),
        _ => None,
    };
    let problem = Problem { spec: *spec, map: ParamMap::new(spec.kind, regime), y: &y.changes, ln_s: ln_s.as_deref() };

    let mut starts: Vec<Vec<f64>> = fixed_starts(spec.kind, &y.changes, regime)
        .into_iter()
        .take(opts.starts.clamp(1, 5))
        .filter_map(|p| problem.map.transform(&p).ok())
        .collect();
    let mut evals = 0;
    if spec.kind == ModelKind::ZiSkellam && opts.nested_start {
        let nested = fit_day(y, &ModelSpec { kind: ModelKind::Skellam, ..*spec }, regime, s_hat, opts)?;
        evals += nested.objective_evals;
        let mut p = nested.params.values.clone();
        p.push(1e-9);
        if let Ok(x) = problem.map.transform(&p) {
            starts.push(x);
        }
    }

    // screen each start with a short simplex run
    let screen = OptimOptions {
        max_evals: opts.screen_evals,
        simplex_evals: opts.screen_evals,
        simplex_only: true,
        ..opts.optim
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in &starts {
        let r = match optimize(|x| problem.objective(x), x0, &screen) {
            Ok(r) => r,
            Err(_) => {
                evals += 1;
                continue;
            }
        };
        evals += r.evals;
        if best.as_ref().is_none_or(|b| r.f < b.1) {
            best = Some((r.x, r.f));
        }
    }
    let Some((x_start, _)) = best else {
        let x0 = starts.first().cloned().unwrap_or_else(|| vec![0.0; problem.map.dim()]);
        return Ok(not_converged(y, spec, regime, &problem, &x0, evals, "objective undefined at every start"));
    };

    let full = optimize(|x| problem.objective(x), &x_start, &opts.optim)?;
    evals += full.evals;
    let mut iterations = full.iterations;
    let mut converged = full.converged;
    let (mut x, mut f) = (full.x, full.f);

    // place parameters on their bounds when the likelihood prefers it, then re-polish the rest
    let mut fixed = vec![false; x.len()];
    for _ in 0..x.len() {
        let mut snapped = false;
        for i in problem.map.lower_bounded() {
            if fixed[i] || problem.map.at_bound(i, &x) {
                continue;
            }
            let mut trial = x.clone();
            trial[i] = problem.map.snap_coord(i);
            let ft = problem.objective(&trial);
            evals += 1;
            if ft <= f + SNAP_TOL {
                x = trial;
                f = ft;
                fixed[i] = true;
                snapped = true;
            }
        }
        if !snapped {
            break;
        }
        let free: Vec<usize> = (0..x.len()).filter(|&i| !fixed[i]).collect();
        if free.is_empty() {
            break;
        }
        let base = x.clone();
        let embed = |z: &[f64]| {
            let mut full = base.clone();
            for (k, &i) in free.iter().enumerate() {
                full[i] = z[k];
            }
            full
        };
        let z0: Vec<f64> = free.iter().map(|&i| x[i]).collect();
        let r = optimize(|z| problem.objective(&embed(z)), &z0, &opts.optim)?;
        evals += r.evals;
        iterations += r.iterations;
        converged = r.converged;
        if r.f <= f {
            x = embed(&r.x);
            f = r.f;
        }
    }

    finish(y, spec, regime, &problem, &x, evals, iterations, converged)
}

fn not_converged(
    y: &ChangeSeries,
    spec: &ModelSpec,
    regime: &BoundRegime,
    problem: &Problem,
    x: &[f64],
    evals: usize,
    msg: &str,
) -> FitResult {
    let values = problem.map.untransform(x);
    FitResult {
        day: y.day.clone(),
        spec: *spec,
        regime: regime.clone(),
        params: ParamVector {
            kind: spec.kind,
            names: spec.kind.param_names().iter().map(|s| s.to_string()).collect(),
            values,
        },
        loglik_avg: f64::NAN,
        loglik_total: f64::NAN,
        n: y.len(),
        converged: false,
        iterations: 0,
        objective_evals: evals,
        at_bound: Vec::new(),
        sigma2_floored: false,
        floored_steps: 0,
        archlm: None,
        message: Some(msg.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    y: &ChangeSeries,
    spec: &ModelSpec,
    regime: &BoundRegime,
    problem: &Problem,
    x: &[f64],
    evals: usize,
    iterations: usize,
    converged: bool,
) -> Result<FitResult> {
    let names = spec.kind.param_names();
    let at_bound: Vec<String> =
        (0..x.len()).filter(|&i| problem.map.at_bound(i, x)).map(|i| names[i].to_string()).collect();
    let x = &problem.map.pin_to_bounds(x);
    let params = problem.params(x)?;
    let values = problem.map.untransform(x);
    let (out, _) = filter_collect(&params, problem.y, problem.ln_s, None)?;
    let total = out.loglik();
    let archlm = standardized_residuals(&out, problem.y, &params).and_then(|r| arch_lm(&r, ARCH_LM_LAGS));
    let sigma2_floored = out.sigma2_path.iter().any(|&s| s <= SIGMA2_FLOOR);
    Ok(FitResult {
        day: y.day.clone(),
        spec: *spec,
        regime: regime.clone(),
        params: ParamVector::new(spec.kind, values)?,
        loglik_avg: total / y.len() as f64,
        loglik_total: total,
        n: y.len(),
        converged: converged && total.is_finite(),
        iterations,
        objective_evals: evals,
        at_bound,
        sigma2_floored,
        floored_steps: out.floored_count,
        archlm,
        message: None,
    })
}

/// Outcome for one day of [`fit_all_days`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFit {
    pub day: String,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

impl DayFit {
    pub fn converged(&self) -> Option<&FitResult> {
        self.fit.as_ref().filter(|f| f.converged)
    }
}

/// Median of one statistic across days, with the number of days left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianStat {
    pub value: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelKind,
    pub regime: String,
    pub days: Vec<DayFit>,
    /// Keyed by parameter name plus `A` and `loglik`.
    pub medians: BTreeMap<String, MedianStat>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

fn median_stat(total: usize, mut values: Vec<f64>) -> MedianStat {
    let used = values.len();
    MedianStat { value: median(&mut values), used, excluded: total - used }
}

/// Summarizes per-day fits the way the result tables do.
pub fn summarize(model: ModelKind, regime: &str, days: Vec<DayFit>) -> FitSummary {
    let total = days.len();
    let ok: Vec<&FitResult> = days.iter().filter_map(|d| d.converged()).collect();
    let mut medians = BTreeMap::new();
    for (i, name) in model.param_names().iter().enumerate() {
        medians.insert(name.to_string(), median_stat(total, ok.iter().map(|f| f.params.values[i]).collect()));
    }
    medians.insert("A".into(), median_stat(total, ok.iter().filter_map(|f| f.archlm).collect()));
    medians.insert("loglik".into(), median_stat(total, ok.iter().map(|f| f.loglik_avg).collect()));
    FitSummary { model, regime: regime.into(), days, medians }
}

/// Fits every day independently (in parallel) and reports medians.
///
/// `profiles`, when given, holds one profile per day.
pub fn fit_all_days(
    days: &[ChangeSeries],
    spec: &ModelSpec,
    regime: &BoundRegime,
    profiles: Option<&[DiurnalProfile]>,
    opts: &FitOptions,
) -> Result<FitSummary> {
    if days.is_empty() {
        return Err(Error::InsufficientData("no days to fit".into()));
    }
    if let Some(p) = profiles {
        if p.len() != days.len() {
            return Err(Error::domain(format!("{} profiles for {} days", p.len(), days.len())));
        }
    }
    let fits: Vec<DayFit> = days
        .par_iter()
        .enumerate()
        .map(|(i, day)| match fit_day(day, spec, regime, profiles.map(|p| &p[i]), opts) {
            Ok(fit) => DayFit { day: day.day.clone(), fit: Some(fit), error: None },
            Err(e) => DayFit { day: day.day.clone(), fit: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(summarize(spec.kind, &regime.name, fits))
}
