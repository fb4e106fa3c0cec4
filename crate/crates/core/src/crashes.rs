//! Empirical crash detection on daily closes: a local peak followed by a drop
//! of more than the threshold to the lowest close within the next three weeks.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::error::CrashError;
use crate::series::{format_instant, PriceSeries};

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrashConfig {
    /// Minimum fractional drop (exclusive).
    pub threshold: f64,
    /// Days after the peak searched for the crash end.
    pub horizon_days: i64,
    /// A peak is strictly above every close within this many days on either side.
    pub peak_neighborhood_days: i64,
}

impl Default for CrashConfig {
    fn default() -> Self {
        Self {
            threshold: 0.15,
            horizon_days: 21,
            peak_neighborhood_days: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashEvent {
    pub peak_time: i64,
    pub peak_price: f64,
    pub end_time: i64,
    pub end_price: f64,
    pub duration_days: i64,
    /// `(peak - end) / peak`
    pub size: f64,
}

impl CrashEvent {
    pub fn new(peak_time: i64, peak_price: f64, end_time: i64, end_price: f64) -> Self {
        Self {
            peak_time,
            peak_price,
            end_time,
            end_price,
            duration_days: (end_time - peak_time).div_euclid(DAY),
            size: (peak_price - end_price) / peak_price,
        }
    }
}

fn is_peak(series: &PriceSeries, i: usize, radius: i64) -> bool {
    let ts = series.timestamps();
    let ps = series.prices();
    let (t, p) = (ts[i], ps[i]);
    let left = ts[..i].iter().rev().zip(ps[..i].iter().rev());
    let right = ts[i + 1..].iter().zip(&ps[i + 1..]);
    left.take_while(|(u, _)| t - **u <= radius * DAY)
        .chain(right.take_while(|(u, _)| **u - t <= radius * DAY))
        .all(|(_, q)| *q < p)
}

/// Scans `series` (daily bars) for crashes, in peak order, without overlap.
pub fn detect_crashes(series: &PriceSeries, config: &CrashConfig) -> Result<Vec<CrashEvent>, CrashError> {
    if series.level().spacing() != DAY {
        return Err(CrashError::Resolution(series.level().to_string()));
    }
    if !(config.threshold >= 0.0 && config.threshold < 1.0) {
        return Err(CrashError::Config(format!(
            "threshold {} outside [0, 1)",
            config.threshold
        )));
    }
    if config.horizon_days < 1 || config.peak_neighborhood_days < 1 {
        return Err(CrashError::Config(
            "horizon and peak neighbourhood must be at least one day".into(),
        ));
    }
    let ts = series.timestamps();
    let ps = series.prices();
    let mut events = Vec::new();
    let mut i = 0;
    while i < ts.len() {
        if !is_peak(series, i, config.peak_neighborhood_days) {
            i += 1;
            continue;
        }
        let horizon = ts[i] + config.horizon_days * DAY;
        let end = (i + 1..ts.len())
            .take_while(|&j| ts[j] <= horizon)
            .min_by(|&a, &b| ps[a].total_cmp(&ps[b]).then(a.cmp(&b)));
        match end {
            Some(j) if (ps[i] - ps[j]) / ps[i] > config.threshold => {
                events.push(CrashEvent::new(ts[i], ps[i], ts[j], ps[j]));
                i = j + 1;
            }
            _ => i += 1,
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrashSummary {
    pub count: usize,
    /// Events per calendar year of the peak.
    pub per_year: BTreeMap<i32, usize>,
    /// Events per 5-percentage-point size bin, keyed by the bin's lower edge in percent.
    pub size_histogram: BTreeMap<u32, usize>,
    pub over_25pct: usize,
    pub fraction_over_25pct: f64,
    pub min_duration: i64,
    pub median_duration: f64,
    pub max_duration: i64,
}

pub fn crash_summary(events: &[CrashEvent]) -> CrashSummary {
    if events.is_empty() {
        return CrashSummary::default();
    }
    let mut s = CrashSummary {
        count: events.len(),
        ..Default::default()
    };
    for e in events {
        let year = DateTime::from_timestamp(e.peak_time, 0)
            .map(|d| d.year())
            .unwrap_or_default();
        *s.per_year.entry(year).or_default() += 1;
        // Rounded to 1e-9 so sizes printed as whole bin edges land in that bin.
        let pct = (e.size * 100.0 * 1e9).round() / 1e9;
        *s.size_histogram.entry((pct / 5.0).floor() as u32 * 5).or_default() += 1;
        if e.size > 0.25 {
            s.over_25pct += 1;
        }
    }
    s.fraction_over_25pct = s.over_25pct as f64 / s.count as f64;
    let mut d: Vec<i64> = events.iter().map(|e| e.duration_days).collect();
    d.sort_unstable();
    s.min_duration = d[0];
    s.max_duration = d[d.len() - 1];
    let mid = d.len() / 2;
    s.median_duration = if d.len() % 2 == 0 {
        (d[mid - 1] + d[mid]) as f64 / 2.0
    } else {
        d[mid] as f64
    };
    s
}

fn day(ts: i64) -> String {
    format_instant(ts).chars().take(10).collect()
}

/// Table-style CSV of `events` followed by `#`-prefixed summary lines.
pub fn write_crashes_csv<W: Write>(mut out: W, events: &[CrashEvent], comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(
        out,
        "number,peak_day,peak_price,end_day,end_price,duration_days,size_pct"
    )?;
    for (k, e) in events.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.1},{},{:.1},{},{:.1}",
            k + 1,
            day(e.peak_time),
            e.peak_price,
            day(e.end_time),
            e.end_price,
            e.duration_days,
            e.size * 100.0
        )?;
    }
    let s = crash_summary(events);
    writeln!(out, "# count={}", s.count)?;
    for (y, n) in &s.per_year {
        writeln!(out, "# year {y}: {n}")?;
    }
    for (lo, n) in &s.size_histogram {
        writeln!(out, "# size {lo}-{}%: {n}", lo + 5)?;
    }
    writeln!(out, "# over 25%: {} ({:.3})", s.over_25pct, s.fraction_over_25pct)?;
    writeln!(
        out,
        "# duration days min={} median={} max={}",
        s.min_duration, s.median_duration, s.max_duration
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimescaleLevel;

    fn daily(prices: &[f64]) -> PriceSeries {
        let ts = (0..prices.len() as i64).map(|i| 1_356_998_400 + i * DAY).collect();
        PriceSeries::new(ts, prices.to_vec(), TimescaleLevel::daily()).unwrap()
    }

    #[test]
    fn rising_series_has_no_crash() {
        let s = daily(&(1..100).map(|i| i as f64).collect::<Vec<_>>());
        assert!(detect_crashes(&s, &CrashConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn single_drop_detected() {
        let mut p = vec![10.0, 11.0, 12.0, 20.0, 15.0, 14.0, 13.0, 16.0, 17.0];
        p.extend((0..30).map(|i| 18.0 + i as f64));
        let ev = detect_crashes(&daily(&p), &CrashConfig::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].peak_price, 20.0);
        assert_eq!(ev[0].end_price, 13.0);
        assert_eq!(ev[0].duration_days, 3);
        assert!((ev[0].size - 0.35).abs() < 1e-12);
    }

    #[test]
    fn drop_at_threshold_is_not_a_crash() {
        let p = [10.0, 11.0, 20.0, 17.0, 18.0, 19.0];
        assert!(detect_crashes(&daily(&p), &CrashConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn end_searched_within_horizon_only() {
        // The deeper low 25 days after the peak is out of reach.
        let mut p = vec![50.0, 60.0, 100.0, 90.0, 80.0];
        p.extend(std::iter::repeat(82.0).take(19));
        p.push(10.0);
        let ev = detect_crashes(&daily(&p), &CrashConfig::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].end_price, 80.0);
    }

    #[test]
    fn sub_daily_rejected() {
        let s = PriceSeries::new(vec![0, 3600, 7200], vec![1.0, 2.0, 3.0], "1h".parse().unwrap()).unwrap();
        assert!(matches!(
            detect_crashes(&s, &CrashConfig::default()),
            Err(CrashError::Resolution(_))
        ));
    }

    #[test]
    fn empty_summary() {
        assert_eq!(crash_summary(&[]), CrashSummary::default());
    }

    #[test]
    fn summary_statistics() {
        let e =
            |d: i64, size: f64| CrashEvent::new(1_451_606_400, 100.0, 1_451_606_400 + d * DAY, 100.0 * (1.0 - size));
        let s = crash_summary(&[e(4, 0.2), e(10, 0.3), e(7, 0.25), e(1, 0.5)]);
        assert_eq!(s.count, 4);
        assert_eq!(s.per_year[&2016], 4);
        assert_eq!(s.over_25pct, 2);
        assert_eq!(s.size_histogram[&25], 1);
        assert_eq!(s.size_histogram[&20], 1);
        assert_eq!(s.median_duration, 5.5);
        assert_eq!((s.min_duration, s.max_duration), (1, 10));
    }
}
