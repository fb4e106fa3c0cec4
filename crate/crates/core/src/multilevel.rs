//! Adaptive multilevel detection.
//!
//! The coarsest (benchmark) level is scanned at every endpoint. When its
//! indicator reaches the trigger threshold, the next finer level is computed
//! starting one fine sample before the trigger time and stepping forward until
//! the fine indicator falls back to zero. A fine level that itself reaches its
//! threshold escalates to the level below it in the same way.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, MultilevelError};
use crate::indicator::{confidence_at, scan_points, ConfidenceReport, IndicatorConfig};
use crate::series::{PriceSeries, TimescaleLevel, WindowSchedule};

/// Which indicator value is compared against the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKey {
    /// `max(ci_pos, ci_neg)`
    #[default]
    Max,
    PositiveOnly,
}

impl TriggerKey {
    pub fn value(&self, report: &ConfidenceReport) -> f64 {
        match self {
            TriggerKey::Max => report.ci_max(),
            TriggerKey::PositiveOnly => report.ci_pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: TimescaleLevel,
    pub schedule: WindowSchedule,
    /// Indicator value at which the next finer level is triggered.
    pub threshold: f64,
}

/// Levels ordered from coarsest (benchmark) to finest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    levels: Vec<LevelSpec>,
    pub trigger: TriggerKey,
    /// Consecutive zero readings that close an episode.
    pub zero_run: usize,
}

impl LevelPlan {
    pub fn new(levels: Vec<LevelSpec>) -> Result<Self, MultilevelError> {
        if levels.is_empty() {
            return Err(MultilevelError::Plan("a plan needs at least one level".into()));
        }
        for pair in levels.windows(2) {
            let (coarse, fine) = (pair[0].level.spacing(), pair[1].level.spacing());
            if fine >= coarse {
                return Err(MultilevelError::Plan(format!(
                    "level {} must be finer than {}",
                    pair[1].level, pair[0].level
                )));
            }
            if coarse % fine != 0 {
                return Err(MultilevelError::Plan(format!(
                    "level {} does not nest inside {}",
                    pair[1].level, pair[0].level
                )));
            }
        }
        for spec in &levels {
            if !(spec.threshold > 0.0 && spec.threshold <= 1.0) {
                return Err(MultilevelError::Plan(format!(
                    "threshold {} for level {} outside (0, 1]",
                    spec.threshold, spec.level
                )));
            }
        }
        Ok(Self {
            levels,
            trigger: TriggerKey::Max,
            zero_run: 1,
        })
    }

    /// Same schedule and threshold on every level.
    pub fn uniform(
        levels: Vec<TimescaleLevel>,
        schedule: WindowSchedule,
        threshold: f64,
    ) -> Result<Self, MultilevelError> {
        Self::new(
            levels
                .into_iter()
                .map(|level| LevelSpec {
                    level,
                    schedule,
                    threshold,
                })
                .collect(),
        )
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    /// Number of levels below the benchmark.
    pub fn sublevels(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Indicator reading at one instant on one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantRecord {
    pub time: i64,
    pub level: String,
    pub level_index: usize,
    pub n_windows: usize,
    pub ci_pos: f64,
    pub ci_neg: f64,
    /// The reading reached this level's threshold.
    pub triggered: bool,
    /// Episode the reading belongs to; `None` on the benchmark level.
    pub episode: Option<usize>,
}

/// Why an episode stopped before its indicator returned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub time: i64,
    pub reason: String,
}

/// A contiguous activation of one finer level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: usize,
    pub level: String,
    pub level_index: usize,
    pub parent: Option<usize>,
    /// Coarser-level time whose reading opened the episode.
    pub trigger_time: i64,
    /// First fine-level endpoint.
    pub start: i64,
    /// Last fine-level endpoint computed.
    pub end: i64,
    pub steps: usize,
    /// Set when fine data ran out before the indicator returned to zero.
    pub truncated: Option<Truncation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultilevelTrace {
    pub records: Vec<InstantRecord>,
    pub episodes: Vec<Episode>,
    /// Benchmark endpoints that could not be evaluated.
    pub skipped: Vec<(i64, String)>,
}

/// Source of indicator readings: `(level index, feed, endpoint index)`.
pub type Evaluator<'a> = dyn Fn(usize, &PriceSeries, usize) -> Result<ConfidenceReport, Error> + 'a;

struct Controller<'a> {
    feeds: &'a [PriceSeries],
    plan: &'a LevelPlan,
    evaluate: &'a Evaluator<'a>,
    trace: MultilevelTrace,
    /// Last endpoint computed on each level.
    last_end: Vec<Option<i64>>,
    observer: &'a mut dyn FnMut(&InstantRecord),
}

impl Controller<'_> {
    fn emit(&mut self, record: InstantRecord) {
        (self.observer)(&record);
        self.trace.records.push(record);
    }

    fn record(&self, report: &ConfidenceReport, level_index: usize, episode: Option<usize>) -> InstantRecord {
        let spec = &self.plan.levels[level_index];
        InstantRecord {
            time: report.t2,
            level: spec.level.name().to_string(),
            level_index,
            n_windows: report.n_windows,
            ci_pos: report.ci_pos,
            ci_neg: report.ci_neg,
            triggered: self.plan.trigger.value(report) >= spec.threshold,
            episode,
        }
    }

    /// Opens an episode on `level_index` unless that level already covers `trigger_time`.
    fn escalate(&mut self, level_index: usize, trigger_time: i64, parent: Option<usize>) {
        let spacing = self.plan.levels[level_index].level.spacing();
        if self.last_end[level_index].is_some_and(|end| end >= trigger_time) {
            return;
        }
        let start = match self.last_end[level_index] {
            Some(end) => (trigger_time - spacing).max(end + spacing),
            None => trigger_time - spacing,
        };
        let id = self.trace.episodes.len();
        self.trace.episodes.push(Episode {
            id,
            level: self.plan.levels[level_index].level.name().to_string(),
            level_index,
            parent,
            trigger_time,
            start,
            end: start,
            steps: 0,
            truncated: None,
        });

        let feed = &self.feeds[level_index];
        let mut time = start;
        let mut zeros = 0;
        loop {
            let report = match feed.index_of(time) {
                Some(idx) => (self.evaluate)(level_index, feed, idx),
                None => Err(Error::Usage(format!(
                    "no {} sample at {}",
                    feed.level(),
                    crate::series::format_instant(time)
                ))),
            };
            let report = match report {
                Ok(r) => r,
                Err(e) => {
                    self.trace.episodes[id].truncated = Some(Truncation {
                        time,
                        reason: match e {
                            Error::Usage(msg) => msg,
                            other => other.to_string(),
                        },
                    });
                    break;
                }
            };
            let rec = self.record(&report, level_index, Some(id));
            let triggered = rec.triggered;
            self.emit(rec);
            self.last_end[level_index] = Some(time);
            let ep = &mut self.trace.episodes[id];
            ep.end = time;
            ep.steps += 1;

            if triggered && level_index + 1 < self.plan.levels.len() {
                self.escalate(level_index + 1, time, Some(id));
            }
            if self.plan.trigger.value(&report) == 0.0 {
                zeros += 1;
                if zeros >= self.plan.zero_run.max(1) {
                    break;
                }
            } else {
                zeros = 0;
            }
            time += spacing;
        }
    }
}

fn check_feeds(feeds: &[PriceSeries], plan: &LevelPlan) -> Result<(), MultilevelError> {
    if feeds.len() != plan.levels.len() {
        return Err(MultilevelError::Plan(format!(
            "{} data feeds for a {}-level plan",
            feeds.len(),
            plan.levels.len()
        )));
    }
    for (feed, spec) in feeds.iter().zip(&plan.levels) {
        if feed.level().spacing() != spec.level.spacing() {
            return Err(MultilevelError::Plan(format!(
                "feed sampled at {} where the plan expects {}",
                feed.level(),
                spec.level
            )));
        }
    }
    Ok(())
}

/// Runs the controller over benchmark endpoints `range` (indices into
/// `feeds[0]`) taken every `stride` samples. `observer` sees every instant
/// record as it is produced.
pub fn run(
    feeds: &[PriceSeries],
    plan: &LevelPlan,
    range: RangeInclusive<usize>,
    stride: usize,
    config: &IndicatorConfig,
    observer: &mut dyn FnMut(&InstantRecord),
) -> Result<MultilevelTrace, MultilevelError> {
    let evaluate =
        |level: usize, feed: &PriceSeries, idx: usize| confidence_at(feed, idx, &plan.levels[level].schedule, config);
    run_with(feeds, plan, range, stride, &evaluate, observer)
}

/// As [`run`], with indicator readings supplied by `evaluate`.
pub fn run_with(
    feeds: &[PriceSeries],
    plan: &LevelPlan,
    range: RangeInclusive<usize>,
    stride: usize,
    evaluate: &Evaluator<'_>,
    observer: &mut dyn FnMut(&InstantRecord),
) -> Result<MultilevelTrace, MultilevelError> {
    check_feeds(feeds, plan)?;
    let bench = &feeds[0];
    if *range.end() >= bench.len() {
        return Err(MultilevelError::Plan(format!(
            "benchmark endpoint {} outside series of length {}",
            range.end(),
            bench.len()
        )));
    }
    let mut ctl = Controller {
        feeds,
        plan,
        evaluate,
        trace: MultilevelTrace::default(),
        last_end: vec![None; plan.levels.len()],
        observer,
    };
    for t2 in scan_points(range, stride) {
        let report = match evaluate(0, bench, t2) {
            Ok(r) => r,
            Err(e) => {
                ctl.trace.skipped.push((bench.timestamps()[t2], e.to_string()));
                continue;
            }
        };
        let rec = ctl.record(&report, 0, None);
        let triggered = rec.triggered;
        ctl.emit(rec);
        if triggered && plan.levels.len() > 1 {
            ctl.escalate(1, report.t2, None);
        }
    }
    Ok(ctl.trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(s: &str) -> TimescaleLevel {
        s.parse().unwrap()
    }

    #[test]
    fn plan_requires_finer_nested_levels() {
        let sched = WindowSchedule::new(30, 60, 10).unwrap();
        assert!(LevelPlan::uniform(vec![level("1h"), level("30m")], sched, 0.008).is_ok());
        assert!(LevelPlan::uniform(vec![level("30m"), level("1h")], sched, 0.008).is_err());
        let odd = TimescaleLevel::from_spacing(2_400).unwrap();
        assert!(LevelPlan::uniform(vec![level("1h"), odd], sched, 0.008).is_err());
        assert!(LevelPlan::uniform(vec![level("1h"), level("30m")], sched, 0.0).is_err());
        assert!(LevelPlan::uniform(vec![], sched, 0.5).is_err());
    }

    #[test]
    fn sublevel_count() {
        let sched = WindowSchedule::new(30, 60, 10).unwrap();
        let plan = LevelPlan::uniform(vec![level("1h"), level("30m"), level("15m")], sched, 0.5).unwrap();
        assert_eq!(plan.sublevels(), 2);
    }

    #[test]
    fn feed_mismatch_rejected() {
        let sched = WindowSchedule::new(30, 60, 10).unwrap();
        let plan = LevelPlan::uniform(vec![level("1h"), level("30m")], sched, 0.5).unwrap();
        let hourly = PriceSeries::new((0..40).map(|i| i * 3600).collect(), vec![1.0; 40], level("1h")).unwrap();
        assert!(run(
            std::slice::from_ref(&hourly),
            &plan,
            35..=39,
            1,
            &IndicatorConfig::default(),
            &mut |_| {}
        )
        .is_err());
        assert!(run(
            &[hourly.clone(), hourly],
            &plan,
            35..=39,
            1,
            &IndicatorConfig::default(),
            &mut |_| {}
        )
        .is_err());
    }

    use crate::indicator::{ScheduleTag, WindowRecord};
    use crate::model::{LpplsFit, LpplsParams};
    use crate::qualify::FilterVerdict;
    use crate::series::FitWindow;

    /// Report with `k` of 125 windows passing as positive bubbles.
    fn constructed(feed: &PriceSeries, idx: usize, k: usize) -> ConfidenceReport {
        let window = FitWindow::new(0, 29).unwrap();
        let records = (0..125)
            .map(|i| WindowRecord {
                window,
                seed: 0,
                fit: Some(LpplsFit {
                    params: LpplsParams {
                        tc: 40.0,
                        m: 0.5,
                        omega: 8.0,
                        a: 0.0,
                        b: -1.0,
                        c1: 0.0,
                        c2: 0.0,
                    },
                    ssr: 0.0,
                    window,
                    converged: true,
                }),
                verdict: FilterVerdict {
                    pass: i < k,
                    ..Default::default()
                },
            })
            .collect();
        ConfidenceReport::from_records(
            feed.timestamps()[idx],
            idx,
            feed.level().clone(),
            ScheduleTag::Benchmark,
            records,
        )
    }

    fn feeds(hours: i64) -> Vec<PriceSeries> {
        let h = PriceSeries::new(
            (0..hours).map(|i| i * 3600).collect(),
            vec![1.0; hours as usize],
            level("1h"),
        )
        .unwrap();
        let m = PriceSeries::new(
            (0..2 * hours).map(|i| i * 1800).collect(),
            vec![1.0; 2 * hours as usize],
            level("30m"),
        )
        .unwrap();
        vec![h, m]
    }

    fn plan(threshold: f64) -> LevelPlan {
        LevelPlan::uniform(vec![level("1h"), level("30m")], WindowSchedule::BENCHMARK, threshold).unwrap()
    }

    /// Benchmark passes `bench(hour)` windows; the fine level stays active until `fine_until` seconds.
    fn trace(threshold: f64, bench: &dyn Fn(i64) -> usize, fine_until: i64) -> MultilevelTrace {
        let feeds = feeds(48);
        let eval = |level: usize, feed: &PriceSeries, idx: usize| -> Result<ConfidenceReport, Error> {
            let t = feed.timestamps()[idx];
            let k = if level == 0 {
                bench(t / 3600)
            } else if t <= fine_until {
                3
            } else {
                0
            };
            Ok(constructed(feed, idx, k))
        };
        run_with(&feeds, &plan(threshold), 0..=40, 1, &eval, &mut |_| {}).unwrap()
    }

    #[test]
    fn single_window_at_threshold_opens_episode() {
        let t = trace(0.008, &|h| usize::from(h == 10), 14 * 3600);
        assert_eq!(t.episodes.len(), 1);
        let ep = &t.episodes[0];
        assert_eq!(ep.trigger_time, 10 * 3600);
        assert_eq!(ep.start, 10 * 3600 - 1800);
        // Active through 14:00, zero at 14:30.
        assert_eq!(ep.end, 14 * 3600 + 1800);
        assert!(ep.truncated.is_none());
        let fine: Vec<i64> = t
            .records
            .iter()
            .filter(|r| r.level_index == 1)
            .map(|r| r.time)
            .collect();
        assert!(fine.iter().all(|&x| x >= ep.start && x <= ep.end));
        assert_eq!(fine.len(), ep.steps);
    }

    #[test]
    fn no_passing_windows_no_episode() {
        let t = trace(0.008, &|_| 0, 14 * 3600);
        assert!(t.episodes.is_empty());
        assert_eq!(t.records.len(), 41);
    }

    #[test]
    fn covered_triggers_do_not_reopen() {
        let t = trace(0.008, &|h| usize::from((10..=13).contains(&h)), 14 * 3600);
        assert_eq!(t.episodes.len(), 1);
    }

    #[test]
    fn below_threshold_does_not_trigger() {
        let t = trace(0.02, &|h| usize::from(h == 10), 14 * 3600);
        assert!(t.episodes.is_empty());
    }

    #[test]
    fn data_end_truncates_episode() {
        let t = trace(0.008, &|h| usize::from(h == 40), i64::MAX);
        let ep = &t.episodes[0];
        let trunc = ep.truncated.as_ref().expect("flagged");
        assert_eq!(trunc.time, 48 * 3600);
        assert_eq!(ep.end, 48 * 3600 - 1800);
    }
}
