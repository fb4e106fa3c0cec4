//! Price series ingestion, validation, resampling and window enumeration.
//!
//! All wall-clock arithmetic lives here. Timestamps are integer epoch seconds;
//! a bar's timestamp marks the open of its interval and its price is the
//! last trade (close) observed inside that interval.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::SeriesError;

/// Smallest admissible calibration window, in samples.
pub const MIN_WINDOW_LENGTH: usize = 30;

/// A named sampling resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimescaleLevel {
    name: String,
    spacing: i64,
}

impl TimescaleLevel {
    pub fn new(name: impl Into<String>, spacing_secs: i64) -> Result<Self, SeriesError> {
        if spacing_secs <= 0 {
            return Err(SeriesError::Config(format!(
                "level spacing must be positive, got {spacing_secs}s"
            )));
        }
        Ok(Self {
            name: name.into(),
            spacing: spacing_secs,
        })
    }

    /// Builds a level whose name is the canonical label of `spacing_secs`.
    pub fn from_spacing(spacing_secs: i64) -> Result<Self, SeriesError> {
        Self::new(format_spacing(spacing_secs), spacing_secs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Nominal spacing in seconds.
    pub fn spacing(&self) -> i64 {
        self.spacing
    }

    pub fn daily() -> Self {
        Self {
            name: "1d".into(),
            spacing: 86_400,
        }
    }
}

impl fmt::Display for TimescaleLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for TimescaleLevel {
    type Err = SeriesError;

    /// Parses labels such as `30m`, `1h`, `6h`, `1d`, `1w` or `900s`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(|| SeriesError::Config(format!("level `{s}` has no unit")))?;
        let (count, unit) = s.split_at(split);
        let count: i64 = count
            .parse()
            .map_err(|_| SeriesError::Config(format!("level `{s}` has no count")))?;
        let unit_secs = match unit {
            "s" => 1,
            "m" | "min" => 60,
            "h" => 3_600,
            "d" => 86_400,
            "w" => 604_800,
            _ => return Err(SeriesError::Config(format!("unknown level unit in `{s}`"))),
        };
        Self::new(s, count * unit_secs)
    }
}

/// Canonical label for a spacing, e.g. 1800 -> `30m`.
pub fn format_spacing(secs: i64) -> String {
    const UNITS: [(i64, &str); 5] = [(604_800, "w"), (86_400, "d"), (3_600, "h"), (60, "m"), (1, "s")];
    for (size, unit) in UNITS {
        if secs % size == 0 {
            return format!("{}{}", secs / size, unit);
        }
    }
    format!("{secs}s")
}

/// A hole in the sampling grid: `missing` nominal bars are absent right
/// before sample `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub index: usize,
    pub missing: usize,
}

/// Validated, immutable price history at one timescale level.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    timestamps: Vec<i64>,
    prices: Vec<f64>,
    level: TimescaleLevel,
    gaps: Vec<Gap>,
}

impl PriceSeries {
    /// Validates the invariants and records every gap in the grid.
    pub fn new(timestamps: Vec<i64>, prices: Vec<f64>, level: TimescaleLevel) -> Result<Self, SeriesError> {
        if timestamps.len() != prices.len() {
            return Err(SeriesError::Config(format!(
                "{} timestamps but {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if timestamps.is_empty() {
            return Err(SeriesError::Data {
                row: 0,
                message: "series is empty".into(),
            });
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(SeriesError::Data {
                row: i + 1,
                message: format!("price {} is not positive", prices[i]),
            });
        }
        let spacing = level.spacing();
        let mut gaps = Vec::new();
        for i in 1..timestamps.len() {
            let diff = timestamps[i] - timestamps[i - 1];
            if diff <= 0 {
                return Err(SeriesError::Data {
                    row: i + 1,
                    message: format!("timestamp {} does not increase", timestamps[i]),
                });
            }
            if diff % spacing != 0 {
                return Err(SeriesError::Data {
                    row: i + 1,
                    message: format!("step of {diff}s is not a multiple of the {} spacing", level.name()),
                });
            }
            if diff > spacing {
                gaps.push(Gap {
                    index: i,
                    missing: (diff / spacing - 1) as usize,
                });
            }
        }
        Ok(Self {
            timestamps,
            prices,
            level,
            gaps,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn level(&self) -> &TimescaleLevel {
        &self.level
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    /// Index of the sample stamped exactly `ts`.
    pub fn index_of(&self, ts: i64) -> Option<usize> {
        self.timestamps.binary_search(&ts).ok()
    }

    /// Index of the last sample stamped at or before `ts`.
    pub fn index_at_or_before(&self, ts: i64) -> Option<usize> {
        match self.timestamps.binary_search(&ts) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Copy of the first `len` samples.
    pub fn truncated(&self, len: usize) -> PriceSeries {
        let len = len.clamp(1, self.len());
        PriceSeries {
            timestamps: self.timestamps[..len].to_vec(),
            prices: self.prices[..len].to_vec(),
            level: self.level.clone(),
            gaps: self.gaps.iter().copied().filter(|g| g.index < len).collect(),
        }
    }

    /// Largest gap, in nominal spacings between consecutive samples, inside `window`.
    pub fn widest_step_in(&self, window: &FitWindow) -> i64 {
        self.gaps
            .iter()
            .filter(|g| g.index > window.t1_index && g.index <= window.t2_index)
            .map(|g| g.missing as i64 + 1)
            .max()
            .unwrap_or(1)
    }

    /// Sample times inside `window`, in nominal spacings elapsed since its first sample.
    pub fn window_times(&self, window: &FitWindow) -> Vec<f64> {
        let t0 = self.timestamps[window.t1_index];
        let spacing = self.level.spacing() as f64;
        self.timestamps[window.t1_index..=window.t2_index]
            .iter()
            .map(|&ts| (ts - t0) as f64 / spacing)
            .collect()
    }

    pub fn window_log_prices(&self, window: &FitWindow) -> Vec<f64> {
        self.prices[window.t1_index..=window.t2_index]
            .iter()
            .map(|p| p.ln())
            .collect()
    }

    pub fn window_prices(&self, window: &FitWindow) -> &[f64] {
        &self.prices[window.t1_index..=window.t2_index]
    }
}

/// Column names and level used when reading a CSV file.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub timestamp_column: String,
    pub price_column: String,
    /// Inferred from the smallest timestamp step when absent.
    pub level: Option<TimescaleLevel>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
            level: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn parse_iso(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for f in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Parses a user-supplied instant: integer epoch seconds or ISO-8601.
pub fn parse_instant(s: &str) -> Option<i64> {
    let s = s.trim();
    s.parse::<i64>().ok().or_else(|| parse_iso(s))
}

/// Formats epoch seconds as ISO-8601 UTC (`YYYY-MM-DDTHH:MM:SSZ`).
pub fn format_instant(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Reads a price series from a CSV file. Lines starting with `#` are ignored.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<PriceSeries, SeriesError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| SeriesError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, options)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<PriceSeries, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SeriesError::Data {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SeriesError::Config(format!("missing column `{name}`")))
    };
    let ts_col = column(&options.timestamp_column)?;
    let price_col = column(&options.price_column)?;

    let mut format = None;
    let mut seen = HashSet::new();
    let mut rows: Vec<(i64, f64)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| SeriesError::Data {
            row,
            message: e.to_string(),
        })?;
        let raw_ts = record.get(ts_col).unwrap_or_default();
        let raw_price = record.get(price_col).unwrap_or_default();
        let fmt = *format.get_or_insert_with(|| {
            if raw_ts.parse::<i64>().is_ok() {
                TimeFormat::Epoch
            } else {
                TimeFormat::Iso
            }
        });
        let ts = match fmt {
            TimeFormat::Epoch => raw_ts.parse::<i64>().ok(),
            TimeFormat::Iso => parse_iso(raw_ts),
        }
        .ok_or_else(|| SeriesError::Data {
            row,
            message: format!("cannot parse timestamp `{raw_ts}` as {fmt:?}"),
        })?;
        let price: f64 = raw_price.parse().map_err(|_| SeriesError::Data {
            row,
            message: format!("cannot parse price `{raw_price}`"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(SeriesError::Data {
                row,
                message: format!("price {price} is not positive"),
            });
        }
        if !seen.insert(ts) {
            return Err(SeriesError::Data {
                row,
                message: format!("duplicate timestamp {ts}"),
            });
        }
        rows.push((ts, price));
    }
    if rows.is_empty() {
        return Err(SeriesError::Data {
            row: 0,
            message: "no data rows".into(),
        });
    }
    rows.sort_by_key(|r| r.0);

    let level = match &options.level {
        Some(level) => level.clone(),
        None => {
            let step = rows
                .windows(2)
                .map(|w| w[1].0 - w[0].0)
                .min()
                .ok_or_else(|| SeriesError::Config("cannot infer a level from a single row".into()))?;
            TimescaleLevel::from_spacing(step)?
        }
    };
    let (timestamps, prices) = rows.into_iter().unzip();
    PriceSeries::new(timestamps, prices, level)
}

/// Writes `timestamp,price` rows; `comment` lines are emitted first, `#`-prefixed.
pub fn write_csv<W: std::io::Write>(mut out: W, series: &PriceSeries, comment: &[String]) -> std::io::Result<()> {
    for line in comment {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "timestamp,price")?;
    for (ts, p) in series.timestamps.iter().zip(&series.prices) {
        writeln!(out, "{ts},{p}")?;
    }
    Ok(())
}

/// Re-buckets a series onto a coarser grid, keeping the last price in each bucket.
///
/// Buckets are aligned to multiples of the target spacing; empty buckets become
/// gaps of the result.
pub fn resample(series: &PriceSeries, target: &TimescaleLevel) -> Result<PriceSeries, SeriesError> {
    let src = series.level.spacing();
    let dst = target.spacing();
    if dst < src || dst % src != 0 {
        return Err(SeriesError::Config(format!(
            "cannot resample {} to {}: spacing ratio is not an integer",
            series.level, target
        )));
    }
    let mut timestamps: Vec<i64> = Vec::new();
    let mut prices: Vec<f64> = Vec::new();
    for (&ts, &p) in series.timestamps.iter().zip(&series.prices) {
        let open = ts.div_euclid(dst) * dst;
        match timestamps.last() {
            Some(&last) if last == open => *prices.last_mut().expect("paired") = p,
            _ => {
                timestamps.push(open);
                prices.push(p);
            }
        }
    }
    PriceSeries::new(timestamps, prices, target.clone())
}

/// Inclusive index range `[t1_index, t2_index]` of a calibration window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitWindow {
    pub t1_index: usize,
    pub t2_index: usize,
}

impl FitWindow {
    pub fn new(t1_index: usize, t2_index: usize) -> Result<Self, SeriesError> {
        if t1_index > t2_index {
            return Err(SeriesError::Config(format!(
                "window start {t1_index} after end {t2_index}"
            )));
        }
        let w = Self { t1_index, t2_index };
        if w.length() < MIN_WINDOW_LENGTH {
            return Err(SeriesError::WindowTooShort {
                length: w.length(),
                min: MIN_WINDOW_LENGTH,
            });
        }
        Ok(w)
    }

    /// Window ending at `t2_index` holding `length` samples.
    pub fn ending_at(t2_index: usize, length: usize) -> Result<Self, SeriesError> {
        if length == 0 || length > t2_index + 1 {
            return Err(SeriesError::Config(format!(
                "window of {length} samples does not fit before index {t2_index}"
            )));
        }
        Self::new(t2_index + 1 - length, t2_index)
    }

    pub fn length(&self) -> usize {
        self.t2_index - self.t1_index + 1
    }
}

/// Window lengths `min_length, min_length + step, ...` up to `max_length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub min_length: usize,
    pub max_length: usize,
    pub step: usize,
}

impl WindowSchedule {
    /// 650 down to 30 in steps of 5: 125 windows.
    pub const BENCHMARK: WindowSchedule = WindowSchedule {
        min_length: 30,
        max_length: 650,
        step: 5,
    };
    /// 30..=200 step 5: 35 windows.
    pub const SHORT_TERM: WindowSchedule = WindowSchedule {
        min_length: 30,
        max_length: 200,
        step: 5,
    };
    /// 205..=650 step 5: 90 windows.
    pub const LONG_TERM: WindowSchedule = WindowSchedule {
        min_length: 205,
        max_length: 650,
        step: 5,
    };

    pub fn new(min_length: usize, max_length: usize, step: usize) -> Result<Self, SeriesError> {
        if step == 0 {
            return Err(SeriesError::Config("schedule step must be positive".into()));
        }
        if min_length > max_length {
            return Err(SeriesError::Config(format!(
                "schedule min {min_length} exceeds max {max_length}"
            )));
        }
        if min_length < MIN_WINDOW_LENGTH {
            return Err(SeriesError::WindowTooShort {
                length: min_length,
                min: MIN_WINDOW_LENGTH,
            });
        }
        Ok(Self {
            min_length,
            max_length,
            step,
        })
    }

    pub fn window_count(&self) -> usize {
        (self.max_length - self.min_length) / self.step + 1
    }

    /// Lengths in descending order.
    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.window_count())
            .rev()
            .map(move |k| self.min_length + k * self.step)
    }

    pub fn contains_length(&self, length: usize) -> bool {
        length >= self.min_length && length <= self.max_length && (length - self.min_length) % self.step == 0
    }
}

impl FromStr for WindowSchedule {
    type Err = SeriesError;

    /// `min,max,step`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| SeriesError::Config(format!("schedule `{s}` is not min,max,step")))?;
        match parts.as_slice() {
            [min, max, step] => Self::new(*min, *max, *step),
            _ => Err(SeriesError::Config(format!("schedule `{s}` is not min,max,step"))),
        }
    }
}

/// The shrinking-window ensemble ending at `t2_index`, longest window first.
///
/// Lengths that need more history than exists before `t2_index` are dropped.
pub fn windows_for(
    t2_index: usize,
    schedule: &WindowSchedule,
    series_len: usize,
) -> Result<Vec<FitWindow>, SeriesError> {
    if t2_index >= series_len {
        return Err(SeriesError::Config(format!(
            "t2 index {t2_index} outside series of length {series_len}"
        )));
    }
    if t2_index + 1 < schedule.min_length {
        return Err(SeriesError::EmptyEnsemble {
            t2_index,
            min_length: schedule.min_length,
        });
    }
    Ok(schedule
        .lengths()
        .filter(|&len| len <= t2_index + 1)
        .map(|len| FitWindow {
            t1_index: t2_index + 1 - len,
            t2_index,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hourly(ts: &[i64], ps: &[f64]) -> PriceSeries {
        PriceSeries::new(ts.to_vec(), ps.to_vec(), "1h".parse().unwrap()).unwrap()
    }

    #[test]
    fn minimal_csv_loads() {
        let csv = "timestamp,price\n0,100\n3600,101\n7200,99\n";
        let opts = CsvOptions {
            level: Some("1h".parse().unwrap()),
            ..Default::default()
        };
        let s = read_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.prices(), &[100.0, 101.0, 99.0]);
        assert!(s.gaps().is_empty());
    }

    #[test]
    fn zero_price_names_row() {
        let csv = "timestamp,price\n0,100\n3600,0\n7200,99\n";
        match read_csv(csv.as_bytes(), &CsvOptions::default()) {
            Err(SeriesError::Data { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn shuffled_rows_sort() {
        let sorted = "timestamp,price\n0,100\n3600,101\n7200,99\n";
        let shuffled = "timestamp,price\n7200,99\n0,100\n3600,101\n";
        let a = read_csv(sorted.as_bytes(), &CsvOptions::default()).unwrap();
        let b = read_csv(shuffled.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.level().spacing(), 3600);
    }

    #[test]
    fn duplicate_timestamp_is_data_error() {
        let csv = "timestamp,price\n0,100\n3600,101\n0,99\n";
        match read_csv(csv.as_bytes(), &CsvOptions::default()) {
            Err(SeriesError::Data { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_config_error() {
        let csv = "time,close\n0,100\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &CsvOptions::default()),
            Err(SeriesError::Config(_))
        ));
    }

    #[test]
    fn iso_timestamps_and_custom_columns() {
        let csv = "date,close\n2018-11-11,6357.5\n2018-11-12,6348.0\n2018-11-14,5738.4\n";
        let opts = CsvOptions {
            timestamp_column: "date".into(),
            price_column: "close".into(),
            level: Some(TimescaleLevel::daily()),
        };
        let s = read_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(s.timestamps()[0], 1_541_894_400);
        assert_eq!(s.gaps(), &[Gap { index: 2, missing: 1 }]);
    }

    #[test]
    fn mixed_time_formats_rejected() {
        let csv = "timestamp,price\n2018-11-11,1\n1541980800,2\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &CsvOptions::default()),
            Err(SeriesError::Data { row: 2, .. })
        ));
    }

    #[test]
    fn resample_keeps_bucket_close() {
        let s = PriceSeries::new(
            vec![0, 1800, 3600, 5400],
            vec![1.0, 2.0, 3.0, 4.0],
            "30m".parse().unwrap(),
        )
        .unwrap();
        let h = resample(&s, &"1h".parse().unwrap()).unwrap();
        assert_eq!(h.prices(), &[2.0, 4.0]);
        assert_eq!(h.timestamps(), &[0, 3600]);
    }

    #[test]
    fn resample_identity() {
        let s = hourly(&[0, 3600, 10800], &[1.0, 2.0, 3.0]);
        assert_eq!(resample(&s, s.level()).unwrap(), s);
    }

    #[test]
    fn resample_with_missing_half_hour() {
        // 30m bars at 0, 1800, (3600 missing), 5400, 7200, 9000
        let s = PriceSeries::new(
            vec![0, 1800, 5400, 7200, 9000],
            vec![1.0, 2.0, 4.0, 5.0, 6.0],
            "30m".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(s.gaps(), &[Gap { index: 2, missing: 1 }]);
        let h = resample(&s, &"1h".parse().unwrap()).unwrap();
        assert_eq!(h.timestamps(), &[0, 3600, 7200]);
        assert_eq!(h.prices(), &[2.0, 4.0, 6.0]);
        assert!(h.gaps().is_empty());
    }

    #[test]
    fn resample_rejects_non_integer_ratio() {
        let s = hourly(&[0, 3600], &[1.0, 2.0]);
        assert!(matches!(
            resample(&s, &"90m".parse().unwrap()),
            Err(SeriesError::Config(_))
        ));
        assert!(resample(&s, &"30m".parse().unwrap()).is_err());
    }

    #[test]
    fn irregular_step_rejected() {
        let lvl: TimescaleLevel = "1h".parse().unwrap();
        assert!(PriceSeries::new(vec![0, 3600, 5000], vec![1.0; 3], lvl).is_err());
    }

    #[test]
    fn paper_window_counts() {
        let n = 2000;
        assert_eq!(windows_for(1000, &WindowSchedule::BENCHMARK, n).unwrap().len(), 125);
        assert_eq!(windows_for(1000, &WindowSchedule::SHORT_TERM, n).unwrap().len(), 35);
        assert_eq!(windows_for(1000, &WindowSchedule::LONG_TERM, n).unwrap().len(), 90);
    }

    #[test]
    fn windows_largest_first_and_truncated() {
        let w = windows_for(99, &WindowSchedule::BENCHMARK, 100).unwrap();
        // lengths 100, 95, ..., 30
        assert_eq!(w.len(), 15);
        assert_eq!(w[0].length(), 100);
        assert_eq!(w[0].t1_index, 0);
        assert_eq!(w.last().unwrap().length(), 30);
        assert!(w.iter().all(|w| w.t2_index == 99));
    }

    #[test]
    fn too_little_history_is_empty_ensemble() {
        assert!(matches!(
            windows_for(28, &WindowSchedule::BENCHMARK, 100),
            Err(SeriesError::EmptyEnsemble { .. })
        ));
    }

    #[test]
    fn short_window_rejected() {
        assert!(matches!(
            FitWindow::ending_at(50, 10),
            Err(SeriesError::WindowTooShort { length: 10, .. })
        ));
    }

    #[test]
    fn level_labels() {
        assert_eq!("30m".parse::<TimescaleLevel>().unwrap().spacing(), 1800);
        assert_eq!("1d".parse::<TimescaleLevel>().unwrap().spacing(), 86_400);
        assert_eq!(format_spacing(1800), "30m");
        assert_eq!(format_spacing(3600), "1h");
        assert!("h".parse::<TimescaleLevel>().is_err());
        assert!("0h".parse::<TimescaleLevel>().is_err());
    }

    #[test]
    fn gap_width_inside_window() {
        let lvl: TimescaleLevel = "1h".parse().unwrap();
        let mut ts: Vec<i64> = (0..40).map(|i| i * 3600).collect();
        for t in ts.iter_mut().skip(20) {
            *t += 4 * 3600;
        }
        let s = PriceSeries::new(ts, vec![1.0; 40], lvl).unwrap();
        assert_eq!(s.widest_step_in(&FitWindow::ending_at(39, 30).unwrap()), 5);
        assert_eq!(
            s.widest_step_in(&FitWindow {
                t1_index: 0,
                t2_index: 19
            }),
            1
        );
        let times = s.window_times(&FitWindow::ending_at(39, 30).unwrap());
        assert_eq!(times[0], 0.0);
        assert_eq!(*times.last().unwrap(), 33.0);
    }
}
