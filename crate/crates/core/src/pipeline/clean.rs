use serde::{Deserialize, Serialize};

use super::{Tick, TickSeries, SESSION_CLOSE_MS, SESSION_OPEN_MS};

/// Center and spread used by the rolling outlier rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutlierCenter {
    /// Mean of the neighbors and mean absolute deviation around it.
    #[default]
    Mean,
    /// Median of the neighbors and median absolute deviation around it.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    /// Neighborhood size including the tick under test; odd.
    pub window: usize,
    pub deviations: f64,
    pub center: OutlierCenter,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig { window: 201, deviations: 10.0, center: OutlierCenter::Mean }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub outside_hours: usize,
    pub bad_price: usize,
    pub outliers: usize,
    pub kept: usize,
    /// Passes of the outlier rule needed to reach a fixed point.
    pub outlier_passes: usize,
    pub warnings: Vec<String>,
}

/// Drops off-session ticks, nonpositive prices and rolling-window outliers.
///
/// The outlier rule is repeated on the survivors until nothing more is
/// flagged, so cleaning an already cleaned series is a no-op.
pub fn clean(ticks: &TickSeries, cfg: &CleaningConfig) -> (TickSeries, CleaningReport) {
    let mut report = CleaningReport { input: ticks.len(), ..Default::default() };
    let mut in_session: Vec<Tick> = Vec::with_capacity(ticks.len());
    for t in &ticks.ticks {
        let (_, ms) = ticks.local_time(t.timestamp_ms);
        if !(SESSION_OPEN_MS..=SESSION_CLOSE_MS).contains(&ms) {
            report.outside_hours += 1;
        } else if t.price <= 0 {
            report.bad_price += 1;
        } else {
            in_session.push(*t);
        }
    }
    let staged = TickSeries { ticks: in_session, tz: ticks.tz };

    let mut kept = Vec::with_capacity(staged.len());
    for (day, range) in staged.day_ranges() {
        let mut day_ticks = staged.ticks[range].to_vec();
        if day_ticks.len() < cfg.window {
            report.warnings.push(format!("{day}: {} ticks, outlier rule uses the whole day", day_ticks.len()));
        }
        let mut passes = 0;
        loop {
            let flags = outlier_flags(&day_ticks, cfg);
            passes += 1;
            let dropped = flags.iter().filter(|&&f| f).count();
            if dropped == 0 {
                break;
            }
            report.outliers += dropped;
            let mut it = flags.iter();
            day_ticks.retain(|_| !*it.next().unwrap());
        }
        report.outlier_passes = report.outlier_passes.max(passes);
        kept.extend(day_ticks);
    }
    report.kept = kept.len();
    (TickSeries { ticks: kept, tz: ticks.tz }, report)
}

fn outlier_flags(day: &[Tick], cfg: &CleaningConfig) -> Vec<bool> {
    let n = day.len();
    let half = cfg.window / 2;
    let whole_day = n < cfg.window;
    let prices: Vec<i64> = day.iter().map(|t| t.price).collect();
    let mut neighbors = Vec::with_capacity(cfg.window);
    (0..n)
        .map(|i| {
            let (lo, hi) = if whole_day { (0, n) } else { (i.saturating_sub(half), (i + half + 1).min(n)) };
            neighbors.clear();
            neighbors.extend(prices[lo..hi].iter().enumerate().filter(|(j, _)| lo + j != i).map(|(_, &p)| p));
            if neighbors.is_empty() {
                return false;
            }
            match cfg.center {
                OutlierCenter::Mean => mean_rule(prices[i], &neighbors, cfg.deviations),
                OutlierCenter::Median => median_rule(prices[i], &mut neighbors, cfg.deviations),
            }
        })
        .collect()
}

// Works on count-scaled integers so the decision is exact.
fn mean_rule(price: i64, neighbors: &[i64], k: f64) -> bool {
    let m = neighbors.len() as i128;
    let sum: i128 = neighbors.iter().map(|&p| p as i128).sum();
    let spread: i128 = neighbors.iter().map(|&p| (p as i128 * m - sum).abs()).sum();
    let dev = (price as i128 * m - sum).abs() * m;
    dev as f64 > k * spread as f64
}

fn median_rule(price: i64, neighbors: &mut [i64], k: f64) -> bool {
    let med = median(neighbors);
    let mut abs_dev: Vec<f64> = neighbors.iter().map(|&p| (p as f64 - med).abs()).collect();
    let mad = median_f64(&mut abs_dev);
    (price as f64 - med).abs() > k * mad
}

fn median(v: &mut [i64]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn median_f64(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
