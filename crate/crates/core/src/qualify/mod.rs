//! Qualification filters applied to each calibrated window.
//!
//! A fit qualifies when its nonlinear parameters sit inside the filter box, it
//! shows enough log-periodic half-oscillations, the implied hazard rate stays
//! nonnegative (damping), the fitted price tracks the data, the detrended
//! residual is genuinely periodic in `ln(tc - t)` (Lomb test) and the log-price
//! residuals are mean reverting (unit-root tests).

pub mod lomb;
pub mod unit_root;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::model::LpplsFit;
use crate::optimizer::damping_ratio;
use crate::series::PriceSeries;

/// How the Dickey–Fuller and Phillips–Perron decisions combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRootRule {
    /// Both tests must reject the unit root.
    Both,
    /// Either rejection suffices.
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
    /// `tc` must lie within this fraction of the window span past its end.
    pub tc_fraction: f64,
    pub min_half_periods: f64,
    /// Divisor of `ω` in the half-period count (π or 2).
    pub oscillation_denominator: f64,
    pub max_rel_err: f64,
    /// Significance level of the Lomb test.
    pub alpha_sig: f64,
    pub lomb_oversampling: f64,
    pub unit_root_alpha: f64,
    pub unit_root_rule: UnitRootRule,
    /// Lagged differences in the Dickey–Fuller regression.
    pub df_lags: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            m_range: (0.01, 0.99),
            omega_range: (2.0, 25.0),
            tc_fraction: 0.2,
            min_half_periods: 2.5,
            oscillation_denominator: PI,
            max_rel_err: 0.15,
            alpha_sig: 0.05,
            lomb_oversampling: 4.0,
            unit_root_alpha: 0.05,
            unit_root_rule: UnitRootRule::Both,
            df_lags: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |msg: &str| Err(FitError::Config(msg.to_string()));
        if !(self.m_range.0 <= self.m_range.1) || !(self.omega_range.0 <= self.omega_range.1) {
            return bad("filter ranges must be ordered");
        }
        if !(self.omega_range.0 > 0.0) {
            return bad("filter omega range must be positive");
        }
        if !(self.tc_fraction >= 0.0) {
            return bad("tc fraction must be nonnegative");
        }
        if !(self.oscillation_denominator > 0.0) {
            return bad("oscillation denominator must be positive");
        }
        if !(self.alpha_sig > 0.0 && self.alpha_sig < 1.0) {
            return bad("alpha_sig must lie in (0, 1)");
        }
        if !(self.lomb_oversampling >= 1.0) {
            return bad("lomb oversampling must be at least 1");
        }
        if unit_root::critical_value(self.unit_root_alpha, 100).is_none() {
            return Err(FitError::Config(format!(
                "unit-root alpha {} has no tabulated critical value (use one of {:?})",
                self.unit_root_alpha,
                unit_root::SUPPORTED_ALPHAS
            )));
        }
        Ok(())
    }
}

/// Per-condition outcome of the filter battery. `None` marks a check that was
/// not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub m_ok: Option<bool>,
    pub omega_ok: Option<bool>,
    pub tc_ok: Option<bool>,
    pub oscillation_ok: Option<bool>,
    pub damping_ok: Option<bool>,
    pub rel_err_ok: Option<bool>,
    pub lomb_ok: Option<bool>,
    pub ar1_ok: Option<bool>,
    pub damping: Option<f64>,
    pub half_periods: Option<f64>,
    pub max_rel_err: Option<f64>,
    pub lomb_p: Option<f64>,
    pub df_stat: Option<f64>,
    pub pp_stat: Option<f64>,
    pub pass: bool,
}

impl FilterVerdict {
    fn flags(&self) -> [Option<bool>; 8] {
        [
            self.m_ok,
            self.omega_ok,
            self.tc_ok,
            self.oscillation_ok,
            self.damping_ok,
            self.rel_err_ok,
            self.lomb_ok,
            self.ar1_ok,
        ]
    }

    /// Conjunction of all conditions; unevaluated conditions count as failed.
    pub fn all_ok(&self) -> bool {
        self.flags().iter().all(|f| *f == Some(true))
    }

    fn bounds_ok(&self) -> bool {
        [
            self.m_ok,
            self.omega_ok,
            self.tc_ok,
            self.oscillation_ok,
            self.damping_ok,
        ]
        .iter()
        .all(|f| *f == Some(true))
    }

    fn finish(mut self) -> Self {
        self.pass = self.all_ok();
        self
    }
}

/// Window end in window-relative time (the window starts at zero).
fn window_end(fit: &LpplsFit, series: &PriceSeries) -> f64 {
    *series.window_times(&fit.window).last().expect("non-empty window")
}

/// Half-period count `(ω / denominator) ln((tc - t1) / (tc - t2))`.
pub fn half_periods(omega: f64, tc: f64, t1: f64, t2: f64, denominator: f64) -> f64 {
    omega / denominator * ((tc - t1) / (tc - t2)).ln()
}

/// Parameter-box, `tc`, damping and oscillation-count checks for a window
/// spanning window-relative times `[0, t2]`.
pub fn check_bounds(fit: &LpplsFit, t2: f64, config: &FilterConfig) -> FilterVerdict {
    let p = &fit.params;
    let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    let damping = damping_ratio(p.m, p.omega, p.b, p.c1, p.c2);
    let halves = if p.tc > t2 {
        half_periods(p.omega, p.tc, 0.0, t2, config.oscillation_denominator)
    } else {
        f64::NAN
    };
    FilterVerdict {
        m_ok: Some(within(p.m, config.m_range)),
        omega_ok: Some(within(p.omega, config.omega_range)),
        tc_ok: Some(p.tc >= t2 && p.tc <= t2 + config.tc_fraction * t2),
        oscillation_ok: Some(halves >= config.min_half_periods),
        damping_ok: Some(damping >= 1.0),
        damping: Some(damping),
        half_periods: Some(halves),
        ..Default::default()
    }
    .finish()
}

/// Largest `|p̂ - p| / p` over the window, with `p̂ = exp(LPPLS(t))`.
pub fn max_relative_error(fit: &LpplsFit, series: &PriceSeries) -> f64 {
    let times = series.window_times(&fit.window);
    series
        .window_prices(&fit.window)
        .iter()
        .zip(&times)
        .map(|(p, t)| match fit.value(*t) {
            Ok(v) => (v.exp() - p).abs() / p,
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, |acc: f64, e| if e.is_nan() { f64::INFINITY } else { acc.max(e) })
}

/// Lomb test of the detrended residual `r = (tc - t)^(-m) (ln p - A - B (tc - t)^m)`
/// against `τ = ln(tc - t)`. Returns the false-alarm probability and the decision.
pub fn lomb_test(fit: &LpplsFit, series: &PriceSeries, config: &FilterConfig) -> (f64, bool) {
    let p = &fit.params;
    let times = series.window_times(&fit.window);
    let logs = series.window_log_prices(&fit.window);
    let mut tau = Vec::with_capacity(times.len());
    let mut r = Vec::with_capacity(times.len());
    for (t, y) in times.iter().zip(&logs) {
        let dt = p.tc - t;
        if !(dt > 0.0) {
            return (1.0, false);
        }
        let f = dt.powf(p.m);
        tau.push(dt.ln());
        r.push((y - p.a - p.b * f) / f);
    }
    let res = lomb::lomb_scan(
        &tau,
        &r,
        config.omega_range.0,
        config.omega_range.1,
        config.lomb_oversampling,
    );
    (res.p_value, res.p_value <= config.alpha_sig)
}

/// Dickey–Fuller and Phillips–Perron tests on `ln p̂ - ln p`. Returns
/// `(pp_stat, df_stat, decision)`.
pub fn unit_root_test(fit: &LpplsFit, series: &PriceSeries, config: &FilterConfig) -> (f64, f64, bool) {
    let times = series.window_times(&fit.window);
    let logs = series.window_log_prices(&fit.window);
    let mut resid = Vec::with_capacity(times.len());
    for (t, y) in times.iter().zip(&logs) {
        match fit.value(*t) {
            Ok(v) => resid.push(v - y),
            Err(_) => return (f64::NAN, f64::NAN, false),
        }
    }
    let df = unit_root::dickey_fuller(&resid, config.df_lags, config.unit_root_alpha);
    let pp = unit_root::phillips_perron(&resid, config.unit_root_alpha);
    let (Some(df), Some(pp)) = (df, pp) else {
        return (f64::NAN, f64::NAN, false);
    };
    let ok = match config.unit_root_rule {
        UnitRootRule::Both => df.rejects && pp.rejects,
        UnitRootRule::Either => df.rejects || pp.rejects,
    };
    (pp.statistic, df.statistic, ok)
}

/// Runs the full battery. The spectral and unit-root tests are skipped when a
/// bound check already failed.
pub fn qualify(fit: &LpplsFit, series: &PriceSeries, config: &FilterConfig) -> FilterVerdict {
    let mut v = check_bounds(fit, window_end(fit, series), config);
    let err = max_relative_error(fit, series);
    v.max_rel_err = Some(err);
    v.rel_err_ok = Some(err <= config.max_rel_err);
    if v.bounds_ok() {
        let (p, ok) = lomb_test(fit, series, config);
        v.lomb_p = Some(p);
        v.lomb_ok = Some(ok);
        let (pp, df, ok) = unit_root_test(fit, series, config);
        v.pp_stat = Some(pp);
        v.df_stat = Some(df);
        v.ar1_ok = Some(ok);
    }
    v.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_synthetic, LpplsParams, SyntheticSpec};
    use crate::series::{FitWindow, TimescaleLevel};

    fn fit_with(params: LpplsParams, len: usize) -> LpplsFit {
        LpplsFit {
            params,
            ssr: 0.0,
            window: FitWindow::new(0, len - 1).unwrap(),
            converged: true,
        }
    }

    fn base() -> LpplsParams {
        LpplsParams {
            tc: 219.0,
            m: 0.5,
            omega: 9.0,
            a: 7.0,
            b: -0.05,
            c1: 0.004,
            c2: -0.002,
        }
    }

    fn synthetic(params: LpplsParams, n: usize, noise: f64, seed: u64) -> PriceSeries {
        generate_synthetic(&SyntheticSpec {
            params,
            n,
            noise_sd: noise,
            seed,
            level: TimescaleLevel::daily(),
            start: 0,
        })
        .unwrap()
    }

    #[test]
    fn half_period_hand_value() {
        let h = half_periods(10.0, 100.0, 0.0, 90.0, PI);
        assert!((h - 10.0 / PI * 10f64.ln()).abs() < 1e-12);
        assert!((h - 7.329).abs() < 1e-3);
    }

    #[test]
    fn damping_hand_value() {
        let p = LpplsParams {
            tc: 205.0,
            m: 0.5,
            omega: 10.0,
            a: 0.0,
            b: -1.0,
            c1: 0.04,
            c2: 0.0,
        };
        let v = check_bounds(&fit_with(p, 200), 199.0, &FilterConfig::default());
        assert!((v.damping.unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(v.damping_ok, Some(true));
    }

    #[test]
    fn zero_oscillation_damping_passes() {
        let p = LpplsParams {
            c1: 0.0,
            c2: 0.0,
            ..base()
        };
        let v = check_bounds(&fit_with(p, 200), 199.0, &FilterConfig::default());
        assert_eq!(v.damping, Some(f64::INFINITY));
        assert_eq!(v.damping_ok, Some(true));
    }

    #[test]
    fn m_below_range_fails_and_short_circuits() {
        let s = synthetic(base(), 200, 0.0, 1);
        let fit = fit_with(LpplsParams { m: 0.005, ..base() }, 200);
        let v = qualify(&fit, &s, &FilterConfig::default());
        assert_eq!(v.m_ok, Some(false));
        assert!(!v.pass);
        assert_eq!(v.lomb_ok, None);
        assert_eq!(v.lomb_p, None);
        assert_eq!(v.ar1_ok, None);
    }

    #[test]
    fn tc_range() {
        let cfg = FilterConfig::default();
        let ok = check_bounds(&fit_with(LpplsParams { tc: 238.0, ..base() }, 200), 199.0, &cfg);
        let late = check_bounds(&fit_with(LpplsParams { tc: 239.0, ..base() }, 200), 199.0, &cfg);
        assert_eq!(ok.tc_ok, Some(true));
        assert_eq!(late.tc_ok, Some(false));
    }

    #[test]
    fn relative_error_shifts() {
        let s = synthetic(base(), 200, 0.0, 1);
        let exact = fit_with(base(), 200);
        assert!(max_relative_error(&exact, &s) < 1e-12);
        let up20 = fit_with(
            LpplsParams {
                a: base().a + 1.2f64.ln(),
                ..base()
            },
            200,
        );
        let up10 = fit_with(
            LpplsParams {
                a: base().a + 1.1f64.ln(),
                ..base()
            },
            200,
        );
        let cfg = FilterConfig::default();
        assert!((max_relative_error(&up20, &s) - 0.2).abs() < 1e-9);
        assert!((max_relative_error(&up10, &s) - 0.1).abs() < 1e-9);
        assert_eq!(qualify(&up20, &s, &cfg).rel_err_ok, Some(false));
        assert_eq!(qualify(&up10, &s, &cfg).rel_err_ok, Some(true));
    }

    #[test]
    fn pass_is_conjunction() {
        let s = synthetic(base(), 200, 0.002, 4);
        let v = qualify(&fit_with(base(), 200), &s, &FilterConfig::default());
        assert_eq!(v.pass, v.all_ok());
        let mut w = v;
        w.lomb_ok = None;
        assert!(!w.finish().pass);
    }

    #[test]
    fn noisy_true_parameters_qualify() {
        let p = LpplsParams {
            tc: 230.0,
            m: 0.5,
            omega: 9.0,
            a: 7.0,
            b: -0.1,
            c1: 0.003,
            c2: 0.002,
        };
        let cfg = FilterConfig::default();
        let passes = (0..20)
            .filter(|seed| qualify(&fit_with(p, 200), &synthetic(p, 200, 0.002, *seed), &cfg).pass)
            .count();
        assert!(passes >= 16, "{passes}/20");
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let bad = FilterConfig {
            unit_root_alpha: 0.03,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FilterConfig {
            alpha_sig: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
