use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{ChangeSeries, TickSeries};
use crate::error::{Error, Result};

/// Writes `day,time_of_day_s,change_cents` rows.
pub fn write_changes_csv(out: impl Write, series: &[ChangeSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "time_of_day_s", "change_cents"])?;
    for s in series {
        for (c, t) in s.changes.iter().zip(&s.time_of_day) {
            w.write_record([s.day.as_str(), &t.to_string(), &c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<changes csv>", e))?;
    Ok(())
}

/// Reads change rows back, grouping by day in order of first appearance.
///
/// The frequency is recovered as the smallest gap between consecutive stamps.
pub fn read_changes_csv(path: &Path) -> Result<Vec<ChangeSeries>> {
    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut rdr =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected = ["day", "time_of_day_s", "change_cents"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(1, format!("expected header {}", expected.join(","))));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_day: BTreeMap<String, (Vec<i64>, Vec<f64>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let day = rec[0].to_string();
        let t: f64 = rec[1].parse().map_err(|_| parse_err(line, format!("bad time `{}`", &rec[1])))?;
        let c: i64 = rec[2].parse().map_err(|_| parse_err(line, format!("bad change `{}`", &rec[2])))?;
        let entry = by_day.entry(day.clone()).or_insert_with(|| {
            order.push(day);
            (Vec::new(), Vec::new())
        });
        entry.0.push(c);
        entry.1.push(t);
    }
    let gap = by_day
        .values()
        .flat_map(|(_, t)| t.windows(2).map(|w| w[1] - w[0]))
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min);
    order
        .into_iter()
        .map(|day| {
            let (changes, time_of_day) = by_day.remove(&day).unwrap();
            let frequency = if gap.is_finite() { (gap * 1000.0).round() / 1000.0 } else { time_of_day[0] / 2.0 };
            ChangeSeries::new(day, frequency, changes, time_of_day)
        })
        .collect()
}

/// Writes ticks as `timestamp,price` with epoch milliseconds and dollar prices,
/// readable by the default schema.
pub fn write_ticks_csv(out: impl Write, ticks: &TickSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "price"])?;
    for t in &ticks.ticks {
        let sign = if t.price < 0 { "-" } else { "" };
        let a = t.price.abs();
        w.write_record([t.timestamp_ms.to_string(), format!("{sign}{}.{:02}", a / 100, a % 100)])?;
    }
    w.flush().map_err(|e| Error::io("<ticks csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn changes_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let a = ChangeSeries::regular("2024-01-02", 0.1, vec![1, 0, -2]);
        let b = ChangeSeries::regular("2024-01-03", 0.1, vec![0, 5]);
        let mut buf = Vec::new();
        write_changes_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let back = read_changes_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].changes, a.changes);
        assert_eq!(back[1].day, "2024-01-03");
        assert!((back[0].frequency - 0.1).abs() < 1e-12);
        for (x, y) in back[0].time_of_day.iter().zip(&a.time_of_day) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(read_changes_csv(&path), Err(Error::Parse { line: 1, .. })));
    }
}
