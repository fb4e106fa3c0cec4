//! Dickey–Fuller and Phillips–Perron unit-root tests (constant, no trend).

use nalgebra::{DMatrix, DVector};

/// Critical-value significance levels with tabulated response surfaces.
pub const SUPPORTED_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

// MacKinnon (2010) response-surface coefficients for the constant-only tau
// statistic with one variable: (τ∞, β1, β2, β3).
const SURFACE: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

/// Finite-sample critical value for `nobs` regression observations.
///
/// Returns `None` for an untabulated significance level.
pub fn critical_value(alpha: f64, nobs: usize) -> Option<f64> {
    let (_, b) = SURFACE.iter().find(|(a, _)| (a - alpha).abs() < 1e-12)?;
    let t = nobs as f64;
    Some(b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

/// Newey–West truncation lag `⌊4 (n/100)^(2/9)⌋`.
pub fn newey_west_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
struct Ols {
    coef: DVector<f64>,
    se: DVector<f64>,
    resid: DVector<f64>,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<Ols> {
    let (n, k) = x.shape();
    if n <= k {
        return None;
    }
    let xtx = x.transpose() * x;
    let chol = xtx.clone().cholesky()?;
    let coef = chol.solve(&(x.transpose() * y));
    let resid = y - x * &coef;
    let s2 = resid.norm_squared() / (n - k) as f64;
    let inv = chol.inverse();
    let se = DVector::from_fn(k, |i, _| (s2 * inv[(i, i)]).max(0.0).sqrt());
    Some(Ols { coef, se, resid })
}

fn has_variance(y: &[f64]) -> bool {
    y.iter().any(|v| *v != y[0])
}

fn t_ratio(coef: f64, se: f64) -> f64 {
    if se > 0.0 {
        coef / se
    } else if coef < 0.0 {
        f64::NEG_INFINITY
    } else if coef > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Outcome of one unit-root test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRootTest {
    pub statistic: f64,
    pub critical_value: f64,
    /// Observations used in the test regression.
    pub nobs: usize,
    pub rejects: bool,
}

impl UnitRootTest {
    fn stationary(alpha: f64, nobs: usize) -> Self {
        Self {
            statistic: f64::NEG_INFINITY,
            critical_value: critical_value(alpha, nobs.max(1)).unwrap_or(f64::NAN),
            nobs,
            rejects: true,
        }
    }
}

/// Dickey–Fuller t-test on `Δy_t = α + ρ y_{t-1} + Σ γ_j Δy_{t-j} + e_t`.
///
/// With `lags = 0` this is the plain Dickey–Fuller regression. A series with no
/// variance is treated as stationary.
pub fn dickey_fuller(y: &[f64], lags: usize, alpha: f64) -> Option<UnitRootTest> {
    critical_value(alpha, 1)?;
    let n = y.len();
    if n < lags + 4 {
        return None;
    }
    let nobs = n - 1 - lags;
    if !has_variance(y) {
        return Some(UnitRootTest::stationary(alpha, nobs));
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let k = 2 + lags;
    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = r + lags + 1;
        match c {
            0 => 1.0,
            1 => y[t - 1],
            j => dy[t - j],
        }
    });
    let target = DVector::from_fn(nobs, |r, _| dy[r + lags]);
    let fit = ols(&x, &target)?;
    let statistic = t_ratio(fit.coef[1], fit.se[1]);
    let cv = critical_value(alpha, nobs)?;
    Some(UnitRootTest {
        statistic,
        critical_value: cv,
        nobs,
        rejects: statistic < cv,
    })
}

/// Phillips–Perron `Z_τ` test with a constant and Newey–West long-run variance.
pub fn phillips_perron(y: &[f64], alpha: f64) -> Option<UnitRootTest> {
    critical_value(alpha, 1)?;
    let n = y.len();
    if n < 4 {
        return None;
    }
    let nobs = n - 1;
    if !has_variance(y) {
        return Some(UnitRootTest::stationary(alpha, nobs));
    }
    let x = DMatrix::from_fn(nobs, 2, |r, c| if c == 0 { 1.0 } else { y[r] });
    let target = DVector::from_fn(nobs, |r, _| y[r + 1] - y[r]);
    let fit = ols(&x, &target)?;
    let u = &fit.resid;
    let t = nobs as f64;
    let gamma = |j: usize| -> f64 { (j..nobs).map(|i| u[i] * u[i - j]).sum::<f64>() / t };
    let gamma0 = gamma(0);
    let lag = newey_west_lag(nobs).min(nobs - 1);
    let lambda2 = gamma0
        + 2.0
            * (1..=lag)
                .map(|j| (1.0 - j as f64 / (lag as f64 + 1.0)) * gamma(j))
                .sum::<f64>();
    let cv = critical_value(alpha, nobs)?;
    let (rho, se) = (fit.coef[1], fit.se[1]);
    if !(gamma0 > 0.0) || !(lambda2 > 0.0) {
        // Exact fit of the test regression: the t-ratio alone decides.
        let statistic = t_ratio(rho, se);
        return Some(UnitRootTest {
            statistic,
            critical_value: cv,
            nobs,
            rejects: statistic < cv,
        });
    }
    let s = (u.norm_squared() / (t - 2.0)).sqrt();
    let lambda = lambda2.sqrt();
    let statistic = (gamma0 / lambda2).sqrt() * t_ratio(rho, se) - (lambda2 - gamma0) / (2.0 * lambda) * (t * se / s);
    Some(UnitRootTest {
        statistic,
        critical_value: cv,
        nobs,
        rejects: statistic < cv,
    })
}
