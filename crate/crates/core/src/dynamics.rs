//! Volatility filters.
//!
//! Continuous baselines (GARCH-t, score-driven t, static t) and the
//! score-driven models for integer changes (interval normal, interval t,
//! Skellam, zero-inflated Skellam). Each filter maps parameters and a
//! change series to per-observation paths and log-likelihood terms.

use serde::{Deserialize, Serialize};

use crate::dist::{
    density_score, interval_eval, scaled_ln_density, skellam_eval, zi_skellam_eval, Kernel, SkellamParams, StudentT,
    ZiSkellamParams,
};
use crate::diurnal::DiurnalProfile;
use crate::error::{Error, Result};
use crate::pipeline::ChangeSeries;

/// Smallest positive double, `2^-1074`.
pub const SIGMA2_FLOOR: f64 = 5e-324;

const SKELLAM_MARGIN: f64 = 1e-12;

/// Every model the crate can filter and estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GarchT,
    GasT,
    StaticT,
    IntervalNormal,
    IntervalT,
    Skellam,
    ZiSkellam,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::GarchT,
        ModelKind::GasT,
        ModelKind::StaticT,
        ModelKind::IntervalNormal,
        ModelKind::IntervalT,
        ModelKind::Skellam,
        ModelKind::ZiSkellam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GarchT => "garch_t",
            ModelKind::GasT => "gas_t",
            ModelKind::StaticT => "static_t",
            ModelKind::IntervalNormal => "interval_normal",
            ModelKind::IntervalT => "interval_t",
            ModelKind::Skellam => "skellam",
            ModelKind::ZiSkellam => "zi_skellam",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::GarchT | ModelKind::GasT => &["mu", "omega", "alpha", "phi", "nu"],
            ModelKind::StaticT => &["sigma2", "nu"],
            ModelKind::IntervalNormal | ModelKind::Skellam => &["theta", "omega", "alpha", "phi"],
            ModelKind::IntervalT => &["theta", "omega", "alpha", "phi", "nu"],
            ModelKind::ZiSkellam => &["theta", "omega", "alpha", "phi", "pi"],
        }
    }

    /// Models whose likelihood treats changes as integers.
    pub fn is_discrete(self) -> bool {
        !matches!(self, ModelKind::GarchT | ModelKind::GasT | ModelKind::StaticT)
    }

    pub fn has_nu(self) -> bool {
        self.param_names().contains(&"nu")
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::domain(format!("unknown model '{s}'")))
    }
}

/// How the continuous score-driven recursion feeds back the previous scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasRecursion {
    /// `ln s2_t = omega + alpha score + phi ln s2_{t-1}`
    #[default]
    LogAr,
    /// `ln s2_t = omega + alpha score + phi s2_{t-1}`.
    Level,
}

/// A model together with its filter options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub gas_recursion: GasRecursion,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind, gas_recursion: GasRecursion::LogAr }
    }
}

impl From<ModelKind> for ModelSpec {
    fn from(kind: ModelKind) -> Self {
        ModelSpec::new(kind)
    }
}

/// Named parameter values in the fixed order of [`ModelKind::param_names`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(kind: ModelKind, values: Vec<f64>) -> Result<Self> {
        let names = kind.param_names();
        if values.len() != names.len() {
            return Err(Error::domain(format!(
                "{kind} takes {} parameters ({}), got {}",
                names.len(),
                names.join(", "),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("parameter value {v} is not finite")));
        }
        Ok(ParamVector { kind, names: names.iter().map(|s| s.to_string()).collect(), values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub phi: f64,
    pub nu: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0 && self.alpha >= 0.0 && self.phi >= 0.0 && self.nu > 0.0 && self.mu.is_finite();
        if ok && self.omega.is_finite() && self.alpha.is_finite() && self.phi.is_finite() && self.nu.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid GARCH parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasContParams {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub phi: f64,
    pub nu: f64,
}

impl GasContParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.omega, self.alpha, self.phi, self.nu].iter().all(|v| v.is_finite());
        if finite && self.phi.abs() < 1.0 && self.nu > 0.0 {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid score-driven t parameters {self:?}")))
        }
    }
}

/// Static location-scale t with the location fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticTParams {
    pub sigma2: f64,
    pub nu: f64,
}

/// Distribution block of the integer models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Shape {
    Normal,
    T { nu: f64 },
    Skellam,
    ZiSkellam { pi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalModelParams {
    pub theta: f64,
    pub omega: f64,
    pub alpha: f64,
    pub phi: f64,
    pub shape: Shape,
}

impl IntervalModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta, self.omega, self.alpha, self.phi].iter().all(|v| v.is_finite());
        let shape_ok = match self.shape {
            Shape::T { nu } => nu > 0.0 && nu.is_finite(),
            Shape::ZiSkellam { pi } => (0.0..1.0).contains(&pi),
            _ => true,
        };
        if finite && shape_ok && self.theta.abs() < 1.0 && self.phi.abs() < 1.0 {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid integer-model parameters {self:?}")))
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.shape {
            Shape::Normal => ModelKind::IntervalNormal,
            Shape::T { .. } => ModelKind::IntervalT,
            Shape::Skellam => ModelKind::Skellam,
            Shape::ZiSkellam { .. } => ModelKind::ZiSkellam,
        }
    }
}

/// Typed parameters of any model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Garch(GarchParams),
    Gas(GasContParams, GasRecursion),
    Static(StaticTParams),
    Interval(IntervalModelParams),
}

impl ModelParams {
    pub fn from_vector(spec: &ModelSpec, p: &ParamVector) -> Result<Self> {
        if p.kind != spec.kind {
            return Err(Error::domain(format!("parameters are for {} but the model is {}", p.kind, spec.kind)));
        }
        let v = &p.values;
        let params = match spec.kind {
            ModelKind::GarchT => {
                let g = GarchParams { mu: v[0], omega: v[1], alpha: v[2], phi: v[3], nu: v[4] };
                g.validate()?;
                ModelParams::Garch(g)
            }
            ModelKind::GasT => {
                let g = GasContParams { mu: v[0], omega: v[1], alpha: v[2], phi: v[3], nu: v[4] };
                g.validate()?;
                ModelParams::Gas(g, spec.gas_recursion)
            }
            ModelKind::StaticT => {
                if !(v[0] > 0.0 && v[1] > 0.0) {
                    return Err(Error::domain("static t needs positive sigma2 and nu"));
                }
                ModelParams::Static(StaticTParams { sigma2: v[0], nu: v[1] })
            }
            kind => {
                let shape = match kind {
                    ModelKind::IntervalNormal => Shape::Normal,
                    ModelKind::IntervalT => Shape::T { nu: v[4] },
                    ModelKind::Skellam => Shape::Skellam,
                    _ => Shape::ZiSkellam { pi: v[4] },
                };
                let ip = IntervalModelParams { theta: v[0], omega: v[1], alpha: v[2], phi: v[3], shape };
                ip.validate()?;
                ModelParams::Interval(ip)
            }
        };
        Ok(params)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Garch(_) => ModelKind::GarchT,
            ModelParams::Gas(..) => ModelKind::GasT,
            ModelParams::Static(_) => ModelKind::StaticT,
            ModelParams::Interval(p) => p.kind(),
        }
    }
}

/// Recursion state entering the next observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub mu: f64,
    pub e: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterOutput {
    pub mu_path: Vec<f64>,
    pub sigma2_path: Vec<f64>,
    pub e_path: Vec<f64>,
    pub score_path: Vec<f64>,
    pub loglik_terms: Vec<f64>,
    pub underflow_count: usize,
    /// Steps where the scale was raised to a floor.
    pub floored_count: usize,
}

impl FilterOutput {
    fn with_capacity(n: usize) -> Self {
        FilterOutput {
            mu_path: Vec::with_capacity(n),
            sigma2_path: Vec::with_capacity(n),
            e_path: Vec::with_capacity(n),
            score_path: Vec::with_capacity(n),
            loglik_terms: Vec::with_capacity(n),
            underflow_count: 0,
            floored_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.loglik_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loglik_terms.is_empty()
    }

    pub fn loglik(&self) -> f64 {
        if self.underflow_count > 0 {
            f64::NEG_INFINITY
        } else {
            self.loglik_terms.iter().sum()
        }
    }
}

/// One filtered observation.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub mu: f64,
    pub sigma2: f64,
    pub e: f64,
    pub score: f64,
    pub loglik: f64,
    pub floored: bool,
}

/// Total log-likelihood, its per-observation average and the underflow count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub total: f64,
    pub avg: f64,
    pub n: usize,
    pub underflow_count: usize,
    pub floored_count: usize,
}

fn diverged(t: usize) -> Error {
    Error::FilterDiverged { index: t }
}

/// Conditional location and scale for the next observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditional {
    pub mu: f64,
    pub sigma2: f64,
    pub e: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, Copy)]
enum Density {
    Continuous(StudentT),
    Interval(Kernel),
    Skellam,
    ZiSkellam(f64),
}

/// One-observation-at-a-time form of every filter.
///
/// Call [`Stepper::conditional`] for the distribution of the next change,
/// then [`Stepper::observe`] with the realized change.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    density: Density,
    mu: f64,
    e: f64,
    /// GARCH variance, or log-variance for the continuous score model.
    level: f64,
    t: usize,
}

impl Stepper {
    /// `sample` is only consulted to start a non-stationary GARCH.
    pub fn new(params: &ModelParams, init: Option<FilterState>, sample: &[i64]) -> Result<Self> {
        let (density, mu, e, level) = match *params {
            ModelParams::Garch(p) => {
                p.validate()?;
                let v = init.map(|s| s.sigma2).unwrap_or_else(|| garch_initial_variance(&p, sample));
                (Density::Continuous(StudentT::new(p.nu)?), p.mu, 0.0, v)
            }
            ModelParams::Gas(p, _) => {
                p.validate()?;
                let l = init.map(|s| s.sigma2.ln()).unwrap_or(p.omega / (1.0 - p.phi));
                (Density::Continuous(StudentT::new(p.nu)?), p.mu, 0.0, l)
            }
            ModelParams::Static(p) => {
                if !(p.sigma2 > 0.0 && p.sigma2.is_finite()) {
                    return Err(Error::domain(format!("static scale must be positive, got {}", p.sigma2)));
                }
                (Density::Continuous(StudentT::new(p.nu)?), 0.0, 0.0, p.sigma2)
            }
            ModelParams::Interval(p) => {
                p.validate()?;
                let density = match p.shape {
                    Shape::Normal => Density::Interval(Kernel::Normal),
                    Shape::T { nu } => Density::Interval(Kernel::StudentT(StudentT::new(nu)?)),
                    Shape::Skellam => Density::Skellam,
                    Shape::ZiSkellam { pi } => Density::ZiSkellam(pi),
                };
                let (mu, e) = init.map(|s| (s.mu, s.e)).unwrap_or((0.0, 0.0));
                (density, mu, e, 0.0)
            }
        };
        Ok(Stepper { params: *params, density, mu, e, level, t: 0 })
    }

    /// Index of the next observation.
    pub fn index(&self) -> usize {
        self.t
    }

    /// Distribution parameters of the next change; `ln_s` is its log diurnal factor.
    pub fn conditional(&self, ln_s: f64) -> Result<Conditional> {
        let t = self.t;
        let (sigma2, floored) = match self.params {
            ModelParams::Garch(_) => (self.level, false),
            ModelParams::Gas(..) => floor_continuous(self.level),
            ModelParams::Static(_) => (self.level.max(SIGMA2_FLOOR), self.level <= SIGMA2_FLOOR),
            ModelParams::Interval(p) => {
                let ln_sigma2 = p.omega + ln_s + self.e;
                if !ln_sigma2.is_finite() {
                    return Err(diverged(t));
                }
                match self.density {
                    Density::Interval(_) => floor_continuous(ln_sigma2),
                    _ => {
                        let raw = ln_sigma2.exp();
                        let bound = (self.mu.abs() * (1.0 + SKELLAM_MARGIN)).max(SIGMA2_FLOOR);
                        if raw <= bound {
                            (bound, true)
                        } else {
                            (raw, false)
                        }
                    }
                }
            }
        };
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(diverged(t));
        }
        Ok(Conditional { mu: self.mu, sigma2, e: self.e, floored })
    }

    /// Scores the realized change `y` and advances the recursion.
    pub fn observe(&mut self, y: i64, c: &Conditional) -> Result<Step> {
        let t = self.t;
        let dev = y as f64 - c.mu;
        let (loglik, score) = match &self.density {
            Density::Continuous(d) => (scaled_ln_density(d, dev, c.sigma2), density_score(dev, c.sigma2, d.nu())),
            Density::Interval(k) => {
                let ev = interval_eval(k, dev, c.sigma2);
                // past the underflow point the interval score tends to the density score
                let score = ev.score.unwrap_or_else(|| match k {
                    Kernel::Normal => 0.5 * (dev * dev / c.sigma2 - 1.0),
                    Kernel::StudentT(d) => density_score(dev, c.sigma2, d.nu()),
                });
                (ev.ln_prob, score)
            }
            Density::Skellam | Density::ZiSkellam(_) => {
                let base = SkellamParams { mu: c.mu, sigma2: c.sigma2 };
                let ev = match self.density {
                    Density::ZiSkellam(pi) => zi_skellam_eval(y, &ZiSkellamParams { base, pi }, true),
                    _ => skellam_eval(y, &base, true),
                };
                (ev.ln_pmf, ev.score.ok_or(Error::ScoreUndefined { index: Some(t) })?)
            }
        };
        let e = match self.params {
            ModelParams::Interval(_) => c.e,
            _ => dev,
        };
        match self.params {
            ModelParams::Garch(p) => self.level = p.omega + p.alpha * dev * dev + p.phi * c.sigma2,
            ModelParams::Gas(p, rec) => {
                let carried = match rec {
                    GasRecursion::LogAr => c.sigma2.ln(),
                    GasRecursion::Level => c.sigma2,
                };
                self.level = p.omega + p.alpha * score + p.phi * carried;
                if self.level.is_nan() {
                    return Err(diverged(t + 1));
                }
            }
            ModelParams::Static(_) => {}
            ModelParams::Interval(p) => {
                self.mu = p.theta * dev;
                self.e = p.alpha * score + p.phi * self.e;
            }
        }
        self.t += 1;
        Ok(Step { mu: c.mu, sigma2: c.sigma2, e, score, loglik, floored: c.floored })
    }

    /// State entering the next observation.
    pub fn state(&self) -> FilterState {
        let sigma2 = match self.params {
            ModelParams::Gas(..) => floor_continuous(self.level).0,
            ModelParams::Interval(_) => self.conditional(0.0).map(|c| c.sigma2).unwrap_or(f64::NAN),
            _ => self.level,
        };
        FilterState { mu: self.mu, e: self.e, sigma2 }
    }
}

/// Runs the recursion of `params` over `y`, handing each step to `sink`.
///
/// `ln_s` is the log diurnal factor per observation (integer models only).
pub fn run_filter(
    params: &ModelParams,
    y: &[i64],
    ln_s: Option<&[f64]>,
    init: Option<FilterState>,
    mut sink: impl FnMut(Step),
) -> Result<FilterState> {
    if let Some(s) = ln_s {
        if s.len() != y.len() {
            return Err(Error::domain("diurnal factors are not aligned with the series"));
        }
    }
    let mut stepper = Stepper::new(params, init, y)?;
    for (t, &obs) in y.iter().enumerate() {
        let c = stepper.conditional(ln_s.map_or(0.0, |s| s[t]))?;
        sink(stepper.observe(obs, &c)?);
    }
    Ok(stepper.state())
}

fn garch_initial_variance(p: &GarchParams, y: &[i64]) -> f64 {
    let persistence = p.alpha + p.phi;
    if persistence < 1.0 {
        return p.omega / (1.0 - persistence);
    }
    // non-stationary: fall back to the sample second moment around mu
    let n = y.len().max(1) as f64;
    let m = y.iter().map(|&v| (v as f64 - p.mu).powi(2)).sum::<f64>() / n;
    if m > 0.0 {
        m
    } else {
        p.omega
    }
}

fn floor_continuous(ln_sigma2: f64) -> (f64, bool) {
    let s = ln_sigma2.exp();
    if s < SIGMA2_FLOOR {
        (SIGMA2_FLOOR, true)
    } else {
        (s, false)
    }
}

/// Collects every step of a filter run.
pub fn filter_collect(
    params: &ModelParams,
    y: &[i64],
    ln_s: Option<&[f64]>,
    init: Option<FilterState>,
) -> Result<(FilterOutput, FilterState)> {
    let mut out = FilterOutput::with_capacity(y.len());
    let state = run_filter(params, y, ln_s, init, |s| {
        out.mu_path.push(s.mu);
        out.sigma2_path.push(s.sigma2);
        out.e_path.push(s.e);
        out.score_path.push(s.score);
        out.loglik_terms.push(s.loglik);
        if s.loglik == f64::NEG_INFINITY {
            out.underflow_count += 1;
        }
        if s.floored {
            out.floored_count += 1;
        }
    })?;
    Ok((out, state))
}

/// Sums log-likelihood terms without storing paths.
pub fn loglik_sum(params: &ModelParams, y: &[i64], ln_s: Option<&[f64]>) -> Result<LogLik> {
    let mut total = 0.0;
    let (mut underflow_count, mut floored_count) = (0, 0);
    run_filter(params, y, ln_s, None, |s| {
        if s.loglik == f64::NEG_INFINITY {
            underflow_count += 1;
        } else {
            total += s.loglik;
        }
        floored_count += s.floored as usize;
    })?;
    let total = if underflow_count > 0 { f64::NEG_INFINITY } else { total };
    let n = y.len();
    Ok(LogLik { total, avg: total / n.max(1) as f64, n, underflow_count, floored_count })
}

fn check_len(y: &ChangeSeries) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::InsufficientData(format!("series {} has {} observations, need 2", y.day, y.len())));
    }
    Ok(())
}

pub fn filter_garch(y: &ChangeSeries, p: &GarchParams) -> Result<FilterOutput> {
    check_len(y)?;
    Ok(filter_collect(&ModelParams::Garch(*p), &y.changes, None, None)?.0)
}

pub fn filter_gas_continuous(y: &ChangeSeries, p: &GasContParams) -> Result<FilterOutput> {
    filter_gas_continuous_with(y, p, GasRecursion::LogAr)
}

pub fn filter_gas_continuous_with(y: &ChangeSeries, p: &GasContParams, rec: GasRecursion) -> Result<FilterOutput> {
    check_len(y)?;
    Ok(filter_collect(&ModelParams::Gas(*p, rec), &y.changes, None, None)?.0)
}

/// Filters an integer model; `s_hat = None` means no intraday seasonality.
pub fn filter_interval(
    y: &ChangeSeries,
    p: &IntervalModelParams,
    s_hat: Option<&DiurnalProfile>,
) -> Result<FilterOutput> {
    let ln_s = s_hat.map(|s| s.ln_values(y)).transpose()?;
    Ok(filter_collect(&ModelParams::Interval(*p), &y.changes, ln_s.as_deref(), None)?.0)
}

/// Log-likelihood of `p` under `spec` on `y`; `-inf` when any term underflows.
pub fn loglik(y: &ChangeSeries, spec: &ModelSpec, p: &ParamVector, s_hat: Option<&DiurnalProfile>) -> Result<LogLik> {
    let params = ModelParams::from_vector(spec, p)?;
    let ln_s = match (spec.kind.is_discrete(), s_hat) {
        (true, Some(s)) => Some(s.ln_values(y)?),
        _ => None,
    };
    loglik_sum(&params, &y.changes, ln_s.as_deref())
}
