//! Synthetic data and brute-force reference computations.
//!
//! Every day draws from its own ChaCha20 stream (`seed`, stream = day index),
//! so output is reproducible and independent of scheduling.

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diurnal::DiurnalProfile;
use crate::dynamics::{Conditional, ModelParams, ModelSpec, ParamVector, Shape, Stepper};
use crate::error::{Error, Result};
use crate::pipeline::{local_to_epoch_ms, ChangeSeries, Tick, TickSeries, SESSION_OPEN_MS, SESSION_SECONDS};

/// Largest change magnitude a draw may produce.
pub const MAX_ABS_CHANGE: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: ModelSpec,
    pub params: ParamVector,
    /// Observations per day.
    pub n: usize,
    pub days: usize,
    pub seed: u64,
    #[serde(default)]
    pub diurnal: Option<DiurnalProfile>,
    /// Seconds per observation; stamps are `i * frequency`.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

fn default_frequency() -> f64 {
    1.0
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 2).unwrap()
}

impl SimSpec {
    pub fn new(model: impl Into<ModelSpec>, params: ParamVector, n: usize, days: usize, seed: u64) -> Self {
        SimSpec {
            model: model.into(),
            params,
            n,
            days,
            seed,
            diurnal: None,
            frequency: default_frequency(),
            start_date: default_start(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Steps where the Skellam scale had to be raised to the location.
    pub floored_steps: usize,
    /// Draws clipped to `MAX_ABS_CHANGE`.
    pub clipped: usize,
}

/// Generator for day `day` of a run seeded with `seed`.
pub fn day_rng(seed: u64, day: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(day);
    rng
}

/// Standard t variate as a normal over the root of a scaled chi-square.
fn student_t(rng: &mut impl Rng, nu: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let chi2 = 2.0 * Gamma::new(0.5 * nu, 1.0).unwrap().sample(rng);
    z / (chi2 / nu).sqrt()
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> i64 {
    if lambda < 1e-300 {
        return 0;
    }
    Poisson::new(lambda).map(|d| d.sample(rng) as i64).unwrap_or(0)
}

fn rounded(x: f64, report: &mut SimReport) -> i64 {
    // interval (y - 0.5, y + 0.5] maps to y
    let y = (x - 0.5).ceil();
    if y.abs() > MAX_ABS_CHANGE {
        report.clipped += 1;
        return MAX_ABS_CHANGE.copysign(y) as i64;
    }
    y as i64
}

/// One draw from the conditional distribution of `params`.
pub fn draw(params: &ModelParams, c: &Conditional, rng: &mut impl Rng, report: &mut SimReport) -> i64 {
    let sigma = c.sigma2.sqrt();
    match params {
        ModelParams::Garch(p) => rounded(c.mu + sigma * student_t(rng, p.nu), report),
        ModelParams::Gas(p, _) => rounded(c.mu + sigma * student_t(rng, p.nu), report),
        ModelParams::Static(p) => rounded(sigma * student_t(rng, p.nu), report),
        ModelParams::Interval(p) => match p.shape {
            Shape::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                rounded(c.mu + sigma * z, report)
            }
            Shape::T { nu } => rounded(c.mu + sigma * student_t(rng, nu), report),
            Shape::Skellam | Shape::ZiSkellam { .. } => {
                if let Shape::ZiSkellam { pi } = p.shape {
                    if rng.gen::<f64>() < pi {
                        return 0;
                    }
                }
                let l1 = 0.5 * (c.sigma2 + c.mu);
                let l2 = 0.5 * (c.sigma2 - c.mu);
                poisson(rng, l1) - poisson(rng, l2)
            }
        },
    }
}

/// Runs the model forward, drawing each change from its conditional distribution.
pub fn simulate(spec: &SimSpec) -> Result<(Vec<ChangeSeries>, SimReport)> {
    if spec.n < 2 {
        return Err(Error::domain("simulation needs at least two observations per day"));
    }
    if !(spec.frequency > 0.0 && spec.frequency * spec.n as f64 <= SESSION_SECONDS + 1e-9) && spec.diurnal.is_some() {
        return Err(Error::domain("simulated stamps run past the session close"));
    }
    let params = ModelParams::from_vector(&spec.model, &spec.params)?;
    let mut report = SimReport::default();
    let mut out = Vec::with_capacity(spec.days);
    for d in 0..spec.days {
        let mut rng = day_rng(spec.seed, d as u64);
        let mut stepper = Stepper::new(&params, None, &[])?;
        let stamps: Vec<f64> = (1..=spec.n).map(|i| i as f64 * spec.frequency).collect();
        let mut changes = Vec::with_capacity(spec.n);
        for &stamp in &stamps {
            let ln_s = match (&spec.diurnal, spec.model.kind.is_discrete()) {
                (Some(p), true) => p.eval(stamp)?.ln(),
                _ => 0.0,
            };
            let c = stepper.conditional(ln_s)?;
            report.floored_steps += c.floored as usize;
            let y = draw(&params, &c, &mut rng, &mut report);
            stepper.observe(y, &c)?;
            changes.push(y);
        }
        let day = (spec.start_date + Duration::days(d as i64)).to_string();
        out.push(ChangeSeries::new(day, spec.frequency, changes, stamps)?);
    }
    Ok((out, report))
}

/// Settings for synthetic trade ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSimSpec {
    pub days: usize,
    pub ticks_per_day: usize,
    pub seed: u64,
    pub start_price_cents: i64,
    /// Standard deviation of the per-tick efficient-price move, in cents.
    pub step_sd: f64,
    /// Probability that a tick is a doubled-price misprint.
    pub spike_prob: f64,
    /// Share of extra ticks placed outside trading hours.
    pub off_hours_share: f64,
    pub start_date: NaiveDate,
    pub timezone: String,
}

impl Default for TickSimSpec {
    fn default() -> Self {
        TickSimSpec {
            days: 1,
            ticks_per_day: 5000,
            seed: 1,
            start_price_cents: 18_754,
            step_sd: 1.0,
            spike_prob: 0.0,
            off_hours_share: 0.0,
            start_date: default_start(),
            timezone: "America/New_York".into(),
        }
    }
}

/// Trade ticks on consecutive weekdays with a rounded random-walk price.
pub fn simulate_ticks(spec: &TickSimSpec) -> Result<TickSeries> {
    let tz: Tz = spec.timezone.parse().map_err(|_| Error::domain(format!("unknown timezone {}", spec.timezone)))?;
    let mut ticks = Vec::new();
    let mut date = spec.start_date;
    for d in 0..spec.days {
        while matches!(date.format("%a").to_string().as_str(), "Sat" | "Sun") {
            date += Duration::days(1);
        }
        let mut rng = day_rng(spec.seed, d as u64);
        let session_ms = (SESSION_SECONDS * 1000.0) as i64;
        let mut offsets: Vec<i64> = (0..spec.ticks_per_day).map(|_| rng.gen_range(0..=session_ms)).collect();
        offsets.sort_unstable();
        let mut efficient = spec.start_price_cents as f64;
        for off in offsets {
            let z: f64 = StandardNormal.sample(&mut rng);
            efficient = (efficient + spec.step_sd * z).max(1.0);
            let mut price = efficient.round().max(1.0) as i64;
            if rng.gen::<f64>() < spec.spike_prob {
                price *= 2;
            }
            ticks.push(Tick { timestamp_ms: local_to_epoch_ms(tz, date, SESSION_OPEN_MS + off)?, price });
        }
        let extra = (spec.off_hours_share * spec.ticks_per_day as f64).round() as usize;
        for _ in 0..extra {
            // before the open or after the close
            let ms = if rng.gen::<bool>() {
                rng.gen_range(4 * 3_600_000..SESSION_OPEN_MS)
            } else {
                rng.gen_range(SESSION_OPEN_MS + session_ms + 1..20 * 3_600_000)
            };
            ticks.push(Tick {
                timestamp_ms: local_to_epoch_ms(tz, date, ms)?,
                price: efficient.round().max(1.0) as i64,
            });
        }
        date += Duration::days(1);
    }
    Ok(TickSeries::new(ticks, tz))
}

/// `sum_j Poisson(j; l1) Poisson(j - k; l2)` by direct summation.
///
/// Fails when the Poisson(l1) mass beyond `truncation` exceeds `1e-12`.
pub fn oracle_skellam_pmf(k: i64, l1: f64, l2: f64, truncation: usize) -> Result<f64> {
    if !(l1 >= 0.0 && l2 >= 0.0) {
        return Err(Error::domain("rates must be nonnegative"));
    }
    let pois = |lambda: f64, upto: usize| -> Vec<f64> {
        let mut p = Vec::with_capacity(upto + 1);
        let mut cur = (-lambda).exp();
        p.push(cur);
        for j in 1..=upto {
            cur *= lambda / j as f64;
            p.push(cur);
        }
        p
    };
    let p1 = pois(l1, truncation);
    let covered: f64 = p1.iter().sum();
    if 1.0 - covered > 1e-12 {
        return Err(Error::domain(format!("truncation {truncation} leaves {:e} of the mass", 1.0 - covered)));
    }
    let p2 = pois(l2, truncation);
    let mut total = 0.0;
    for j in 0..=truncation as i64 {
        let m = j - k;
        if m < 0 || m as usize > truncation {
            continue;
        }
        total += p1[j as usize] * p2[m as usize];
    }
    Ok(total)
}

/// `ln Gamma` by upward shift and Stirling's series, kept separate from the
/// library's own implementation.
fn stirling_ln_gamma(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = x;
    while z < 15.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series =
        1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2) - 1.0 / (1680.0 * z * z2 * z2 * z2);
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

fn oracle_density(x: f64, mu: f64, sigma2: f64, nu: Option<f64>) -> f64 {
    let sigma = sigma2.sqrt();
    let z = (x - mu) / sigma;
    match nu {
        None => (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma),
        Some(nu) => {
            let ln_c = stirling_ln_gamma(0.5 * (nu + 1.0))
                - stirling_ln_gamma(0.5 * nu)
                - 0.5 * (nu * std::f64::consts::PI).ln();
            (ln_c - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()).exp() / sigma
        }
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = 0.0;
    let mut g = 0.0;
    for i in 0..8 {
        let x = GK_NODES[i];
        let fx = if x == 0.0 { f(c) } else { f(c - h * x) + f(c + h * x) };
        k += GK_KRONROD[i] * fx;
        if i % 2 == 1 {
            g += GK_GAUSS[i / 2] * fx;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gauss_kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
}

/// Probability of `(y - 0.5, y + 0.5]` by adaptive Gauss-Kronrod quadrature
/// of the location-scale density; `nu = None` is the normal.
pub fn oracle_interval_prob(y: i64, mu: f64, sigma2: f64, nu: Option<f64>) -> f64 {
    let f = |x: f64| oracle_density(x, mu, sigma2, nu);
    let (a, b) = (y as f64 - 0.5, y as f64 + 0.5);
    // split at the mode so the peak sits on a panel edge
    if mu > a && mu < b {
        adaptive(&f, a, mu, 1e-14, 40) + adaptive(&f, mu, b, 1e-14, 40)
    } else {
        adaptive(&f, a, b, 1e-14, 40)
    }
}
