use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ChangeSeries, TickSeries, SESSION_CLOSE_MS, SESSION_OPEN_MS};
use crate::error::{Error, Result};

/// Last-tick prices of one day on the fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DayGrid {
    pub day: String,
    /// Milliseconds since the session open of each surviving grid point.
    pub offsets_ms: Vec<i64>,
    pub prices: Vec<i64>,
}

fn frequency_ms(frequency: f64) -> Result<i64> {
    let ms = (frequency * 1000.0).round();
    if !(frequency.is_finite() && ms >= 1.0) {
        return Err(Error::domain(format!("frequency must be at least 1 ms, got {frequency} s")));
    }
    Ok(ms as i64)
}

/// Samples the last trade at or before each point `open + k * frequency`,
/// `k = 1 ..`, up to the close. Points before the day's first trade are dropped.
pub fn last_tick_grid(ticks: &TickSeries, frequency: f64) -> Result<Vec<DayGrid>> {
    let step = frequency_ms(frequency)?;
    let points = (SESSION_CLOSE_MS - SESSION_OPEN_MS) / step;
    let mut out = Vec::new();
    for (day, range) in ticks.day_ranges() {
        let day_ticks = &ticks.ticks[range];
        let offsets: Vec<i64> =
            day_ticks.iter().map(|t| ticks.local_time(t.timestamp_ms).1 - SESSION_OPEN_MS).collect();
        let mut grid = DayGrid { day: day.to_string(), offsets_ms: Vec::new(), prices: Vec::new() };
        let mut next = 0usize;
        let mut last: Option<i64> = None;
        for k in 1..=points {
            let at = k * step;
            while next < day_ticks.len() && offsets[next] <= at {
                last = Some(day_ticks[next].price);
                next += 1;
            }
            if let Some(p) = last {
                grid.offsets_ms.push(at);
                grid.prices.push(p);
            }
        }
        out.push(grid);
    }
    Ok(out)
}

/// Integer price changes per day; days with fewer than two grid points are
/// skipped and reported in the returned warnings.
pub fn aggregate_last_tick(ticks: &TickSeries, frequency: f64) -> Result<(Vec<ChangeSeries>, Vec<String>)> {
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for grid in last_tick_grid(ticks, frequency)? {
        if grid.prices.len() < 2 {
            warnings.push(format!("{}: {} grid point(s), day skipped", grid.day, grid.prices.len()));
            continue;
        }
        let changes = grid.prices.windows(2).map(|w| w[1] - w[0]).collect();
        let time_of_day = grid.offsets_ms[1..].iter().map(|&ms| ms as f64 / 1000.0).collect();
        series.push(ChangeSeries { day: grid.day, frequency, changes, time_of_day });
    }
    Ok((series, warnings))
}

/// Empirical distribution of changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub n: usize,
    /// Share of observations at each integer value.
    pub histogram: BTreeMap<i64, f64>,
    pub zero_share: f64,
    pub within_ten_share: f64,
}

pub fn summarize_changes(series: &[ChangeSeries]) -> Result<ChangeSummary> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let mut n = 0usize;
    for s in series {
        for &c in &s.changes {
            *counts.entry(c).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no price changes to summarize".into()));
    }
    let share = |c: usize| c as f64 / n as f64;
    let zero_share = share(counts.get(&0).copied().unwrap_or(0));
    let within_ten_share = share(counts.range(-10..=10).map(|(_, &c)| c).sum());
    let histogram = counts.into_iter().map(|(k, c)| (k, share(c))).collect();
    Ok(ChangeSummary { n, histogram, zero_share, within_ten_share })
}
