use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{local_to_epoch_ms, Tick, TickSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriceUnit {
    #[default]
    Dollars,
    Cents,
}

/// Column mapping for trade files.
///
/// Timestamps may be epoch milliseconds, ISO-8601 date-times (local exchange
/// time unless an offset is given) or bare times of day combined with
/// `date_column` / `default_date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub timestamp: String,
    pub price: String,
    pub date_column: Option<String>,
    pub default_date: Option<NaiveDate>,
    pub unit: PriceUnit,
    pub timezone: String,
    pub delimiter: char,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            timestamp: "timestamp".into(),
            price: "price".into(),
            date_column: None,
            default_date: None,
            unit: PriceUnit::Dollars,
            timezone: "America/New_York".into(),
            delimiter: ',',
        }
    }
}

impl Schema {
    /// Parses `key=value` pairs separated by commas or semicolons, e.g.
    /// `timestamp=time,price=px,unit=cents`.
    pub fn parse_inline(spec: &str) -> Result<Self> {
        let mut schema = Schema::default();
        for pair in spec.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) =
                pair.split_once('=').ok_or_else(|| Error::domain(format!("schema entry `{pair}` is not key=value")))?;
            let v = v.trim();
            match k.trim() {
                "timestamp" => schema.timestamp = v.into(),
                "price" => schema.price = v.into(),
                "date" | "date_column" => schema.date_column = Some(v.into()),
                "default_date" => {
                    schema.default_date = Some(
                        NaiveDate::parse_from_str(v, "%Y-%m-%d")
                            .map_err(|e| Error::domain(format!("bad default_date `{v}`: {e}")))?,
                    )
                }
                "unit" => {
                    schema.unit = match v {
                        "dollars" => PriceUnit::Dollars,
                        "cents" => PriceUnit::Cents,
                        other => return Err(Error::domain(format!("unknown price unit `{other}`"))),
                    }
                }
                "tz" | "timezone" => schema.timezone = v.into(),
                "delimiter" => {
                    schema.delimiter = match v {
                        "tab" | "\\t" => '\t',
                        s if s.chars().count() == 1 => s.chars().next().unwrap(),
                        other => return Err(Error::domain(format!("bad delimiter `{other}`"))),
                    }
                }
                other => return Err(Error::domain(format!("unknown schema key `{other}`"))),
            }
        }
        Ok(schema)
    }

    /// Inline `key=value` list, or a path to a JSON schema file.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            return Ok(serde_json::from_str(&text)?);
        }
        Self::parse_inline(arg)
    }

    pub fn tz(&self) -> Result<Tz> {
        self.timezone.parse().map_err(|_| Error::domain(format!("unknown time zone `{}`", self.timezone)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub kept: usize,
    pub empty_price: usize,
    pub malformed: usize,
}

/// Reads a trade file; `.gz` files are decompressed on the fly.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<(TickSeries, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    ingest_reader(reader, schema, path)
}

pub fn ingest_reader(reader: impl Read, schema: &Schema, origin: &Path) -> Result<(TickSeries, IngestReport)> {
    let tz = schema.tz()?;
    let parse_err = |line: usize, msg: String| Error::Parse { path: origin.to_path_buf(), line, msg };

    let mut rdr = csv::ReaderBuilder::new().delimiter(schema.delimiter as u8).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(1, "empty file".into()));
    }
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .or_else(|| name.parse::<usize>().ok().filter(|&i| i < headers.len()))
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let ts_col = column(&schema.timestamp)?;
    let px_col = column(&schema.price)?;
    let date_col = schema.date_column.as_deref().map(column).transpose()?;

    let mut report = IngestReport::default();
    let mut ticks = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        report.rows += 1;
        let price_field = rec.get(px_col).unwrap_or("");
        if price_field.is_empty() {
            report.empty_price += 1;
            continue;
        }
        let date = match date_col {
            Some(c) => match NaiveDate::parse_from_str(rec.get(c).unwrap_or(""), "%Y-%m-%d") {
                Ok(d) => Some(d),
                Err(_) => {
                    report.malformed += 1;
                    continue;
                }
            },
            None => schema.default_date,
        };
        let parsed =
            parse_timestamp(rec.get(ts_col).unwrap_or(""), date, tz).zip(parse_price(price_field, schema.unit));
        match parsed {
            Some((timestamp_ms, price)) => ticks.push(Tick { timestamp_ms, price }),
            None => report.malformed += 1,
        }
    }
    report.kept = ticks.len();
    Ok((TickSeries::new(ticks, tz), report))
}

fn parse_timestamp(field: &str, date: Option<NaiveDate>, tz: Tz) -> Option<i64> {
    if field.is_empty() {
        return None;
    }
    if field.bytes().all(|b| b.is_ascii_digit() || b == b'-') && !field[1..].contains('-') {
        return field.parse().ok();
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(field, fmt) {
            return local_ms(naive.date(), naive.time(), tz);
        }
    }
    let time = NaiveTime::parse_from_str(field, "%H:%M:%S%.f").ok()?;
    local_ms(date.unwrap_or(NaiveDate::from_ymd_opt(1970, 1, 1)?), time, tz)
}

fn local_ms(date: NaiveDate, time: NaiveTime, tz: Tz) -> Option<i64> {
    let ms = time.num_seconds_from_midnight() as i64 * 1000 + (time.nanosecond() / 1_000_000) as i64;
    local_to_epoch_ms(tz, date, ms).ok()
}

/// Decimal string to integer cents, rounding half away from zero.
pub(crate) fn parse_price(field: &str, unit: PriceUnit) -> Option<i64> {
    let (neg, digits) = match field.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, field.strip_prefix('+').unwrap_or(field)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let scale_digits = match unit {
        PriceUnit::Dollars => 2,
        PriceUnit::Cents => 0,
    };
    let int_val: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut cents = int_val.checked_mul(10i64.pow(scale_digits as u32))?;
    let frac = frac_part.as_bytes();
    for (i, &b) in frac.iter().take(scale_digits).enumerate() {
        cents += (b - b'0') as i64 * 10i64.pow((scale_digits - 1 - i) as u32);
    }
    if frac.len() > scale_digits && frac[scale_digits] >= b'5' {
        cents += 1;
    }
    Some(if neg { -cents } else { cents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::local_time;

    #[test]
    fn dollar_prices_round_half_away() {
        assert_eq!(parse_price("187.54", PriceUnit::Dollars), Some(18754));
        assert_eq!(parse_price("187.545", PriceUnit::Dollars), Some(18755));
        assert_eq!(parse_price("187.5449", PriceUnit::Dollars), Some(18754));
        assert_eq!(parse_price("-0.005", PriceUnit::Dollars), Some(-1));
        assert_eq!(parse_price("12", PriceUnit::Dollars), Some(1200));
        assert_eq!(parse_price("18754", PriceUnit::Cents), Some(18754));
        assert_eq!(parse_price("18754.5", PriceUnit::Cents), Some(18755));
        assert_eq!(parse_price("1x.2", PriceUnit::Dollars), None);
    }

    fn ingest(text: &str, schema: &Schema) -> Result<(TickSeries, IngestReport)> {
        ingest_reader(text.as_bytes(), schema, Path::new("inline.csv"))
    }

    #[test]
    fn time_only_rows_convert_units() {
        let schema = Schema { default_date: NaiveDate::from_ymd_opt(2024, 3, 4), ..Schema::default() };
        let (ticks, report) = ingest("timestamp,price\n09:30:00.123,187.54\n", &schema).unwrap();
        assert_eq!(report.kept, 1);
        assert_eq!(ticks.ticks[0].price, 18754);
        let (day, ms) = ticks.local_time(ticks.ticks[0].timestamp_ms);
        assert_eq!(day, NaiveDate::from_ymd_opt(2024, 3, 4).unwrap());
        assert_eq!(ms, (9 * 3600 + 30 * 60) * 1000 + 123);
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let text = "timestamp,price\n1000,1.01\n999,1.00\n1000,1.02\n1000,1.03\n";
        let (ticks, _) = ingest(text, &Schema::default()).unwrap();
        let prices: Vec<i64> = ticks.ticks.iter().map(|t| t.price).collect();
        assert_eq!(prices, vec![100, 101, 102, 103]);
    }

    #[test]
    fn empty_price_rows_are_counted() {
        let text = "timestamp,price\n1000,1.01\n1001,\n1002,abc\n";
        let (ticks, report) = ingest(text, &Schema::default()).unwrap();
        assert_eq!(ticks.len(), 1);
        assert_eq!(report.empty_price, 1);
        assert_eq!(report.malformed, 1);
        assert_eq!(report.rows, 3);
    }

    #[test]
    fn iso_and_offset_timestamps() {
        let text = "timestamp,price\n2024-01-02T09:30:00.500,1\n2024-01-02T14:30:01.000Z,2\n";
        let (ticks, _) = ingest(text, &Schema::default()).unwrap();
        let (_, a) = local_time(ticks.tz, ticks.ticks[0].timestamp_ms);
        let (_, b) = local_time(ticks.tz, ticks.ticks[1].timestamp_ms);
        assert_eq!(a, 34_200_500);
        assert_eq!(b, 34_201_000);
    }

    #[test]
    fn structural_errors_are_fatal() {
        assert!(matches!(ingest("", &Schema::default()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ingest("time,px\n1,2\n", &Schema::default()), Err(Error::Parse { line: 1, .. })));
        let err = ingest("timestamp,price\n1,2\n3,4,5\n", &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn inline_schema() {
        let s = Schema::parse_inline("timestamp=t;price=p;unit=cents;tz=UTC").unwrap();
        assert_eq!(s.timestamp, "t");
        assert_eq!(s.unit, PriceUnit::Cents);
        assert!(s.tz().is_ok());
        assert!(Schema::parse_inline("nope=1").is_err());
    }
}
