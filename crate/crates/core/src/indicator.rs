//! LPPLS confidence indicator: the fraction of a shrinking-window ensemble,
//! all ending at the same instant, whose calibrations pass the filters.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FitError, SeriesError};
use crate::model::LpplsFit;
use crate::optimizer::{fit_window, CmaesConfig, SearchBounds};
use crate::qualify::{qualify, FilterConfig, FilterVerdict};
use crate::series::{format_instant, windows_for, FitWindow, PriceSeries, TimescaleLevel, WindowSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleTag {
    Benchmark,
    ShortTerm,
    LongTerm,
    Custom,
}

impl ScheduleTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleTag::Benchmark => "benchmark",
            ScheduleTag::ShortTerm => "short_term",
            ScheduleTag::LongTerm => "long_term",
            ScheduleTag::Custom => "custom",
        }
    }

    /// The tag of a well-known schedule, `Custom` otherwise.
    pub fn of(schedule: &WindowSchedule) -> Self {
        match *schedule {
            WindowSchedule::BENCHMARK => ScheduleTag::Benchmark,
            WindowSchedule::SHORT_TERM => ScheduleTag::ShortTerm,
            WindowSchedule::LONG_TERM => ScheduleTag::LongTerm,
            _ => ScheduleTag::Custom,
        }
    }
}

/// Everything needed to fit and qualify one window ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorConfig {
    pub search: SearchBounds,
    pub cmaes: CmaesConfig,
    pub filter: FilterConfig,
    /// Global seed mixed into every per-window seed.
    pub seed: u64,
    /// Windows spanning a step wider than this many nominal spacings are left out.
    pub max_gap_spacings: i64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            search: SearchBounds::default(),
            cmaes: CmaesConfig::default(),
            filter: FilterConfig::default(),
            seed: 0,
            max_gap_spacings: 3,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        self.cmaes.validate()?;
        self.filter.validate()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Optimizer seed of one window, a stable hash of the global seed, the level
/// spacing, the window end timestamp and the window length.
pub fn window_seed(global_seed: u64, spacing: i64, t2_timestamp: i64, length: usize) -> u64 {
    [spacing as u64, t2_timestamp as u64, length as u64]
        .iter()
        .fold(splitmix64(global_seed), |h, v| splitmix64(h ^ v))
}

/// Calibration and verdict of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: FitWindow,
    pub seed: u64,
    /// `None` when the optimizer found no feasible candidate.
    pub fit: Option<LpplsFit>,
    pub verdict: FilterVerdict,
}

impl WindowRecord {
    pub fn passes(&self) -> bool {
        self.fit.is_some() && self.verdict.pass
    }

    /// `+1` for a passing positive bubble (`B < 0`), `-1` for a passing
    /// negative bubble (`B > 0`), `0` otherwise.
    pub fn sign(&self) -> i8 {
        match self.fit {
            Some(f) if self.verdict.pass && f.params.b < 0.0 => 1,
            Some(f) if self.verdict.pass && f.params.b > 0.0 => -1,
            _ => 0,
        }
    }
}

/// Confidence indicator at one endpoint for one window schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub t2: i64,
    pub t2_index: usize,
    pub level: TimescaleLevel,
    pub schedule_tag: ScheduleTag,
    pub n_windows: usize,
    pub n_pass_pos: usize,
    pub n_pass_neg: usize,
    pub ci_pos: f64,
    pub ci_neg: f64,
    pub per_window: Vec<WindowRecord>,
}

impl ConfidenceReport {
    /// Counts signs over `records`; every record is one attempted window.
    pub fn from_records(
        t2: i64,
        t2_index: usize,
        level: TimescaleLevel,
        schedule_tag: ScheduleTag,
        per_window: Vec<WindowRecord>,
    ) -> Self {
        let n_windows = per_window.len();
        let n_pass_pos = per_window.iter().filter(|r| r.sign() > 0).count();
        let n_pass_neg = per_window.iter().filter(|r| r.sign() < 0).count();
        let frac = |k: usize| {
            if n_windows == 0 {
                0.0
            } else {
                k as f64 / n_windows as f64
            }
        };
        Self {
            t2,
            t2_index,
            level,
            schedule_tag,
            n_windows,
            n_pass_pos,
            n_pass_neg,
            ci_pos: frac(n_pass_pos),
            ci_neg: frac(n_pass_neg),
            per_window,
        }
    }

    /// Restricts the report to the windows whose lengths belong to `schedule`.
    pub fn restricted(&self, schedule: &WindowSchedule) -> Self {
        let records = self
            .per_window
            .iter()
            .filter(|r| schedule.contains_length(r.window.length()))
            .cloned()
            .collect();
        Self::from_records(
            self.t2,
            self.t2_index,
            self.level.clone(),
            ScheduleTag::of(schedule),
            records,
        )
    }

    pub fn ci_max(&self) -> f64 {
        self.ci_pos.max(self.ci_neg)
    }
}

/// Fits and qualifies a single window with its derived seed.
pub fn evaluate_window(series: &PriceSeries, window: FitWindow, config: &IndicatorConfig) -> WindowRecord {
    let t2 = series.timestamps()[window.t2_index];
    let seed = window_seed(config.seed, series.level().spacing(), t2, window.length());
    let cmaes = CmaesConfig { seed, ..config.cmaes };
    match fit_window(series, &window, &config.search, &cmaes) {
        Ok(fit) => WindowRecord {
            window,
            seed,
            fit: Some(fit),
            verdict: qualify(&fit, series, &config.filter),
        },
        Err(_) => WindowRecord {
            window,
            seed,
            fit: None,
            verdict: FilterVerdict::default(),
        },
    }
}

/// Computes the indicator at `t2_index` over `schedule`.
///
/// Windows crossing a gap wider than `max_gap_spacings` are left out of the
/// ensemble; failed fits remain in the denominator.
pub fn confidence_at(
    series: &PriceSeries,
    t2_index: usize,
    schedule: &WindowSchedule,
    config: &IndicatorConfig,
) -> Result<ConfidenceReport, Error> {
    let windows: Vec<FitWindow> = windows_for(t2_index, schedule, series.len())?
        .into_iter()
        .filter(|w| series.widest_step_in(w) <= config.max_gap_spacings)
        .collect();
    if windows.is_empty() {
        return Err(SeriesError::EmptyEnsemble {
            t2_index,
            min_length: schedule.min_length,
        }
        .into());
    }
    let records: Vec<WindowRecord> = windows
        .into_par_iter()
        .map(|w| evaluate_window(series, w, config))
        .collect();
    Ok(ConfidenceReport::from_records(
        series.timestamps()[t2_index],
        t2_index,
        series.level().clone(),
        ScheduleTag::of(schedule),
        records,
    ))
}

/// Benchmark, short-term and long-term reports at one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSplit {
    pub benchmark: ConfidenceReport,
    pub short_term: ConfidenceReport,
    pub long_term: ConfidenceReport,
}

/// Fits the benchmark ensemble once and partitions it by window length.
pub fn split_horizon(series: &PriceSeries, t2_index: usize, config: &IndicatorConfig) -> Result<HorizonSplit, Error> {
    let benchmark = confidence_at(series, t2_index, &WindowSchedule::BENCHMARK, config)?;
    Ok(HorizonSplit {
        short_term: benchmark.restricted(&WindowSchedule::SHORT_TERM),
        long_term: benchmark.restricted(&WindowSchedule::LONG_TERM),
        benchmark,
    })
}

/// Endpoint indices of a scan: `range` walked with `stride`.
pub fn scan_points(range: RangeInclusive<usize>, stride: usize) -> Vec<usize> {
    range.step_by(stride.max(1)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Reports ordered by endpoint.
    pub reports: Vec<ConfidenceReport>,
    /// Endpoints that could not be evaluated, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Indicator at every endpoint of `range` (inclusive) taken every `stride` samples.
pub fn scan(
    series: &PriceSeries,
    range: RangeInclusive<usize>,
    stride: usize,
    schedule: &WindowSchedule,
    config: &IndicatorConfig,
) -> ScanResult {
    scan_with(series, range, stride, schedule, config, &|_| {})
}

/// As [`scan`], calling `observer` as each endpoint completes (in any order).
pub fn scan_with(
    series: &PriceSeries,
    range: RangeInclusive<usize>,
    stride: usize,
    schedule: &WindowSchedule,
    config: &IndicatorConfig,
    observer: &(dyn Fn(&ConfidenceReport) + Sync),
) -> ScanResult {
    let outcomes: Vec<(usize, Result<ConfidenceReport, Error>)> = scan_points(range, stride)
        .into_par_iter()
        .map(|t2| {
            let r = confidence_at(series, t2, schedule, config);
            if let Ok(report) = &r {
                observer(report);
            }
            (t2, r)
        })
        .collect();
    let mut result = ScanResult {
        reports: Vec::with_capacity(outcomes.len()),
        skipped: Vec::new(),
    };
    for (t2, r) in outcomes {
        match r {
            Ok(rep) => result.reports.push(rep),
            Err(e) => result.skipped.push((t2, e.to_string())),
        }
    }
    result
}

/// Writes one CSV row per report: `t2,level,schedule,n_windows,n_pass_pos,n_pass_neg,ci_pos,ci_neg`.
pub fn write_reports_csv<W: Write>(out: W, reports: &[ConfidenceReport], comments: &[String]) -> std::io::Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t2",
        "level",
        "schedule",
        "n_windows",
        "n_pass_pos",
        "n_pass_neg",
        "ci_pos",
        "ci_neg",
    ])?;
    for r in reports {
        w.write_record([
            format_instant(r.t2),
            r.level.name().to_string(),
            r.schedule_tag.as_str().to_string(),
            r.n_windows.to_string(),
            r.n_pass_pos.to_string(),
            r.n_pass_neg.to_string(),
            r.ci_pos.to_string(),
            r.ci_neg.to_string(),
        ])?;
    }
    w.flush()
}
