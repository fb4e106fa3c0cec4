//! Normalized Lomb–Scargle periodogram for unevenly sampled data.

use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LombResult {
    /// False-alarm probability of the highest peak.
    pub p_value: f64,
    /// Angular frequency of the highest peak.
    pub peak_omega: f64,
    pub peak_power: f64,
    /// Number of independent frequencies assumed by the false-alarm formula.
    pub independent: f64,
    pub grid_step: f64,
}

impl LombResult {
    fn degenerate() -> Self {
        Self {
            p_value: 1.0,
            peak_omega: f64::NAN,
            peak_power: 0.0,
            independent: 1.0,
            grid_step: f64::NAN,
        }
    }
}

/// Variance-normalized power at each angular frequency in `omegas`.
///
/// Returns `None` when `y` has no variance.
pub fn periodogram(t: &[f64], y: &[f64], omegas: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(t.len(), y.len());
    let n = y.len();
    if n < 2 {
        return None;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) || !var.is_finite() {
        return None;
    }
    let power = omegas
        .iter()
        .map(|&w| {
            // Time offset that makes the sine and cosine terms orthogonal.
            let (s2, c2) = t.iter().fold((0.0, 0.0), |(s, c), &ti| {
                let (si, ci) = (2.0 * w * ti).sin_cos();
                (s + si, c + ci)
            });
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (ti, di) in t.iter().zip(&dev) {
                let (s, c) = (w * (ti - tau)).sin_cos();
                yc += di * c;
                ys += di * s;
                cc += c * c;
                ss += s * s;
            }
            let mut p = 0.0;
            if cc > 0.0 {
                p += yc * yc / cc;
            }
            if ss > 0.0 {
                p += ys * ys / ss;
            }
            p / (2.0 * var)
        })
        .collect();
    Some(power)
}

/// Scans angular frequencies in `[omega_lo, omega_hi]` and returns the
/// false-alarm probability `1 - (1 - e^(-P_max))^M` of the strongest peak.
///
/// The grid step is `2π / (oversampling · span(t))`, and `M` is the grid size
/// divided by the oversampling factor (at least one). Constant or non-finite
/// input yields `p_value = 1`.
pub fn lomb_scan(t: &[f64], y: &[f64], omega_lo: f64, omega_hi: f64, oversampling: f64) -> LombResult {
    if t.len() < 2 || y.iter().chain(t).any(|v| !v.is_finite()) {
        return LombResult::degenerate();
    }
    let (lo, hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return LombResult::degenerate();
    }
    let step = TAU / (oversampling * span);
    let count = ((omega_hi - omega_lo) / step).floor() as usize + 1;
    let omegas: Vec<f64> = (0..count).map(|k| omega_lo + k as f64 * step).collect();
    let Some(power) = periodogram(t, y, &omegas) else {
        return LombResult::degenerate();
    };
    let (k, &peak) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let independent = (count as f64 / oversampling).max(1.0);
    // 1 - (1 - e^-P)^M, evaluated stably for large P.
    let p_value = -((-(-peak).exp()).ln_1p() * independent).exp_m1();
    LombResult {
        p_value: p_value.clamp(0.0, 1.0),
        peak_omega: omegas[k],
        peak_power: peak,
        independent,
        grid_step: step,
    }
}
