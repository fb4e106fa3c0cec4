use lppls::indicator::{confidence_at, scan, split_horizon, IndicatorConfig};
use lppls::model::{generate_synthetic, LpplsParams, SyntheticSpec};
use lppls::series::{PriceSeries, TimescaleLevel, WindowSchedule};
use lppls::ErrorKind;

fn daily(prices: Vec<f64>) -> PriceSeries {
    let ts = (0..prices.len() as i64).map(|i| 1_483_228_800 + i * 86_400).collect();
    PriceSeries::new(ts, prices, TimescaleLevel::daily()).unwrap()
}

fn bubble(n: usize) -> PriceSeries {
    generate_synthetic(&SyntheticSpec {
        params: LpplsParams {
            tc: n as f64 + 15.0,
            m: 0.5,
            omega: 9.0,
            a: 7.0,
            b: -0.1,
            c1: 0.003,
            c2: 0.002,
        },
        n,
        noise_sd: 0.002,
        seed: 21,
        level: TimescaleLevel::daily(),
        start: 1_483_228_800,
    })
    .unwrap()
}

#[test]
fn flat_series_has_zero_confidence() {
    let s = daily(vec![100.0; 120]);
    let schedule = WindowSchedule::new(30, 110, 20).unwrap();
    let r = confidence_at(&s, 119, &schedule, &IndicatorConfig::default()).unwrap();
    assert_eq!(r.n_windows, 5);
    assert_eq!((r.n_pass_pos, r.n_pass_neg), (0, 0));
    assert_eq!((r.ci_pos, r.ci_neg), (0.0, 0.0));
    assert_eq!(r.per_window.len(), 5);
}

#[test]
fn bubble_end_scores_positive() {
    let s = bubble(220);
    let schedule = WindowSchedule::new(60, 200, 20).unwrap();
    let r = confidence_at(&s, 219, &schedule, &IndicatorConfig::default()).unwrap();
    assert_eq!(r.n_windows, 8);
    assert!(r.ci_pos > 0.5, "ci_pos {}", r.ci_pos);
    assert_eq!(r.ci_neg, 0.0);
}

#[test]
fn windows_across_wide_gaps_are_excluded() {
    let mut ts: Vec<i64> = (0..100).map(|i| i * 86_400).collect();
    for t in ts.iter_mut().skip(60) {
        *t += 10 * 86_400;
    }
    let s = PriceSeries::new(ts, vec![50.0; 100], TimescaleLevel::daily()).unwrap();
    let schedule = WindowSchedule::new(30, 90, 10).unwrap();
    let r = confidence_at(&s, 99, &schedule, &IndicatorConfig::default()).unwrap();
    // only the 30- and 40-sample windows start after the gap
    assert_eq!(r.n_windows, 2);

    let lenient = IndicatorConfig {
        max_gap_spacings: 20,
        ..IndicatorConfig::default()
    };
    assert_eq!(confidence_at(&s, 99, &schedule, &lenient).unwrap().n_windows, 7);
}

#[test]
fn too_little_history_is_a_data_error() {
    let s = daily(vec![10.0; 20]);
    let e = confidence_at(
        &s,
        19,
        &WindowSchedule::new(30, 60, 10).unwrap(),
        &IndicatorConfig::default(),
    )
    .unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Data);
}

#[test]
fn scan_orders_reports_and_lists_skips() {
    let s = bubble(150);
    let schedule = WindowSchedule::new(40, 80, 40).unwrap();
    let r = scan(&s, 30..=149, 20, &schedule, &IndicatorConfig::default());
    let idx: Vec<usize> = r.reports.iter().map(|x| x.t2_index).collect();
    assert_eq!(idx, [50, 70, 90, 110, 130]);
    assert_eq!(r.skipped.iter().map(|x| x.0).collect::<Vec<_>>(), [30]);
}

#[test]
fn horizon_split_partitions_benchmark() {
    let s = daily((0..700).map(|i| 100.0 + (i % 7) as f64).collect());
    let h = split_horizon(&s, 699, &IndicatorConfig::default()).unwrap();
    assert_eq!(h.benchmark.n_windows, 125);
    assert_eq!(h.short_term.n_windows + h.long_term.n_windows, 125);
    assert_eq!(h.short_term.n_pass_pos + h.long_term.n_pass_pos, h.benchmark.n_pass_pos);
}
