//! Tick ingestion, cleaning, last-tick aggregation and integer price changes.

mod aggregate;
mod clean;
mod ingest;
mod io;

pub use aggregate::{aggregate_last_tick, last_tick_grid, summarize_changes, ChangeSummary, DayGrid};
pub use clean::{clean, CleaningConfig, CleaningReport, OutlierCenter};
pub use ingest::{ingest_csv, ingest_reader, IngestReport, PriceUnit, Schema};
pub use io::{read_changes_csv, write_changes_csv, write_ticks_csv};

use chrono::{NaiveDate, TimeZone, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SESSION_OPEN_MS: i64 = (9 * 3600 + 30 * 60) * 1000;
pub const SESSION_CLOSE_MS: i64 = 16 * 3600 * 1000;
pub const SESSION_SECONDS: f64 = ((SESSION_CLOSE_MS - SESSION_OPEN_MS) / 1000) as f64;

/// One trade: UTC epoch milliseconds and price in integer cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tick {
    pub timestamp_ms: i64,
    pub price: i64,
}

/// Trades of one instrument, sorted by time, with the exchange time zone.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub ticks: Vec<Tick>,
    pub tz: Tz,
}

impl TickSeries {
    pub fn new(mut ticks: Vec<Tick>, tz: Tz) -> Self {
        ticks.sort_by_key(|t| t.timestamp_ms);
        TickSeries { ticks, tz }
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Exchange-local trading date and milliseconds since local midnight.
    pub fn local_time(&self, timestamp_ms: i64) -> (NaiveDate, i64) {
        local_time(self.tz, timestamp_ms)
    }

    /// Index ranges of consecutive ticks sharing a local date.
    pub fn day_ranges(&self) -> Vec<(NaiveDate, std::ops::Range<usize>)> {
        let mut out: Vec<(NaiveDate, std::ops::Range<usize>)> = Vec::new();
        for (i, t) in self.ticks.iter().enumerate() {
            let (d, _) = self.local_time(t.timestamp_ms);
            match out.last_mut() {
                Some((last, r)) if *last == d => r.end = i + 1,
                _ => out.push((d, i..i + 1)),
            }
        }
        out
    }
}

pub(crate) fn local_time(tz: Tz, timestamp_ms: i64) -> (NaiveDate, i64) {
    let utc = chrono::DateTime::from_timestamp_millis(timestamp_ms).expect("timestamp in range");
    let local = utc.with_timezone(&tz);
    let t = local.time();
    let ms = t.num_seconds_from_midnight() as i64 * 1000 + (t.nanosecond() / 1_000_000) as i64;
    (local.date_naive(), ms)
}

pub(crate) fn local_to_epoch_ms(tz: Tz, date: NaiveDate, ms_of_day: i64) -> Result<i64> {
    let naive = date.and_hms_opt(0, 0, 0).unwrap() + chrono::Duration::milliseconds(ms_of_day);
    tz.from_local_datetime(&naive)
        .earliest()
        .map(|dt| dt.timestamp_millis())
        .ok_or_else(|| Error::domain(format!("{naive} does not exist in {tz}")))
}

/// Integer price changes of one trading day at a fixed frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSeries {
    pub day: String,
    /// Seconds per grid step.
    pub frequency: f64,
    pub changes: Vec<i64>,
    /// Seconds since 09:30:00 of the grid point closing each change.
    pub time_of_day: Vec<f64>,
}

impl ChangeSeries {
    pub fn new(day: impl Into<String>, frequency: f64, changes: Vec<i64>, time_of_day: Vec<f64>) -> Result<Self> {
        if changes.len() != time_of_day.len() {
            return Err(Error::domain("changes and time-of-day stamps differ in length"));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::domain(format!("frequency must be positive, got {frequency}")));
        }
        if time_of_day.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("time-of-day stamps must be strictly increasing"));
        }
        Ok(ChangeSeries { day: day.into(), frequency, changes, time_of_day })
    }

    /// Evenly stamped series, handy for simulated data.
    pub fn regular(day: impl Into<String>, frequency: f64, changes: Vec<i64>) -> Self {
        let time_of_day = (1..=changes.len()).map(|i| i as f64 * frequency).collect();
        ChangeSeries { day: day.into(), frequency, changes, time_of_day }
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}
