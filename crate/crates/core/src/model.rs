//! The LPPLS log-price model and its slaved linear least-squares problem.
//!
//! ```text
//! ln p(t) ≈ A + B (tc - t)^m + C1 (tc - t)^m cos(ω ln(tc - t)) + C2 (tc - t)^m sin(ω ln(tc - t))
//! ```
//!
//! For fixed nonlinear parameters `(tc, m, ω)` the four amplitudes
//! `(A, B, C1, C2)` enter linearly, so they are solved exactly through the
//! 4×4 normal equations and the calibration cost becomes a function of three
//! variables only.
//!
//! # Design notes
//!
//! The formula is the conditional expectation of the log-price in a
//! rational-expectation bubble whose crash hazard rate follows a power law
//! decorated with log-periodic oscillations; the drift compensates the hazard
//! under the no-arbitrage martingale condition. `B < 0` corresponds to
//! super-exponential growth toward `tc` (a positive bubble), `B > 0` to an
//! accelerating decline (a negative bubble). The hazard-rate parameters of
//! that derivation are never calibrated and have no representation here. The
//! phase sign convention (`cos(ω ln(tc - t) ± φ)`) is absorbed by the
//! `(C1, C2)` parameterisation.
//!
//! Times are window-relative, in nominal sample spacings: the first sample of a
//! window is `t = 0` and `tc` is measured on the same axis.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SeriesError};
use crate::series::{FitWindow, PriceSeries, TimescaleLevel};

/// Cost assigned to infeasible `(tc, m, ω)` candidates; orders above every finite cost.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Largest tolerated condition estimate of the equilibrated normal matrix.
const MAX_CONDITION: f64 = 1e13;

/// The seven LPPLS parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsParams {
    pub tc: f64,
    pub m: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LpplsParams {
    /// Oscillation amplitude `C = sqrt(C1² + C2²)`.
    pub fn amplitude(&self) -> f64 {
        self.c1.hypot(self.c2)
    }

    /// Phase `atan2(C2, C1)` in `[0, 2π)`.
    pub fn phase(&self) -> f64 {
        let phi = self.c2.atan2(self.c1);
        if phi < 0.0 {
            phi + TAU
        } else {
            phi
        }
    }

    pub fn value(&self, t: f64) -> Result<f64, ModelError> {
        lppls_value(t, self)
    }
}

/// One calibrated window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsFit {
    pub params: LpplsParams,
    pub ssr: f64,
    pub window: FitWindow,
    pub converged: bool,
}

impl LpplsFit {
    pub fn value(&self, t: f64) -> Result<f64, ModelError> {
        lppls_value(t, &self.params)
    }
}

/// Evaluates the model log-price at window time `t < tc`.
pub fn lppls_value(t: f64, p: &LpplsParams) -> Result<f64, ModelError> {
    let dt = p.tc - t;
    if !(dt > 0.0) {
        return Err(ModelError::Domain { t, tc: p.tc });
    }
    let ln_dt = dt.ln();
    let f = (p.m * ln_dt).exp();
    let (s, c) = (p.omega * ln_dt).sin_cos();
    Ok(p.a + f * (p.b + p.c1 * c + p.c2 * s))
}

/// Least-squares amplitudes for fixed `(tc, m, ω)` and the resulting residual sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub ssr: f64,
}

impl LinearSolution {
    pub fn params(&self, tc: f64, m: f64, omega: f64) -> LpplsParams {
        LpplsParams {
            tc,
            m,
            omega,
            a: self.a,
            b: self.b,
            c1: self.c1,
            c2: self.c2,
        }
    }
}

/// Cholesky factor of a 4×4 symmetric positive definite matrix (lower triangle).
fn cholesky4(m: &[[f64; 4]; 4]) -> Option<([[f64; 4]; 4], f64)> {
    let mut l = [[0.0; 4]; 4];
    let mut min_pivot = f64::INFINITY;
    let mut max_pivot: f64 = 0.0;
    for j in 0..4 {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        min_pivot = min_pivot.min(d);
        max_pivot = max_pivot.max(d);
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in (j + 1)..4 {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / ljj;
        }
    }
    Some((l, max_pivot / min_pivot))
}

fn cholesky_solve(l: &[[f64; 4]; 4], rhs: [f64; 4]) -> [f64; 4] {
    let mut y = [0.0; 4];
    for i in 0..4 {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = y[i];
        for k in (i + 1)..4 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solves the normal equations for `(A, B, C1, C2)` at fixed `(tc, m, ω)`.
///
/// The normal matrix is equilibrated to unit diagonal before factorisation and
/// the solution receives one step of iterative refinement against the full
/// residual. Candidates whose equilibrated matrix has a condition estimate
/// above `1e13` are rejected as degenerate.
pub fn solve_linear(
    log_prices: &[f64],
    times: &[f64],
    tc: f64,
    m: f64,
    omega: f64,
) -> Result<LinearSolution, ModelError> {
    let n = log_prices.len();
    if times.len() != n {
        return Err(ModelError::InvalidArgument(format!(
            "{} times for {} log-prices",
            times.len(),
            n
        )));
    }
    if n < 4 {
        return Err(ModelError::InvalidArgument(format!("need at least 4 samples, got {n}")));
    }
    if !(m.is_finite() && omega.is_finite() && tc.is_finite()) {
        return Err(ModelError::InvalidArgument("non-finite parameter".into()));
    }

    let mut basis: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut normal = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    for (&t, &y) in times.iter().zip(log_prices) {
        let dt = tc - t;
        if !(dt > 0.0) {
            return Err(ModelError::Domain { t, tc });
        }
        let ln_dt = dt.ln();
        let f = (m * ln_dt).exp();
        let (s, c) = (omega * ln_dt).sin_cos();
        let row = [1.0, f, f * c, f * s];
        for i in 0..4 {
            rhs[i] += row[i] * y;
            for j in 0..=i {
                normal[i][j] += row[i] * row[j];
            }
        }
        basis.push([f, f * c, f * s]);
    }
    for i in 0..4 {
        for j in 0..i {
            normal[j][i] = normal[i][j];
        }
    }
    if normal.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::DegenerateBasis("non-finite basis".into()));
    }

    let mut scale = [0.0; 4];
    for i in 0..4 {
        if !(normal[i][i] > 0.0) {
            return Err(ModelError::DegenerateBasis(format!("basis column {i} vanishes")));
        }
        scale[i] = normal[i][i].sqrt().recip();
    }
    let mut equil = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            equil[i][j] = normal[i][j] * scale[i] * scale[j];
        }
    }
    let (l, cond) =
        cholesky4(&equil).ok_or_else(|| ModelError::DegenerateBasis("normal matrix not positive definite".into()))?;
    if cond > MAX_CONDITION {
        return Err(ModelError::DegenerateBasis(format!("condition estimate {cond:.3e}")));
    }

    let scaled_rhs = [
        rhs[0] * scale[0],
        rhs[1] * scale[1],
        rhs[2] * scale[2],
        rhs[3] * scale[3],
    ];
    let z = cholesky_solve(&l, scaled_rhs);
    let mut theta = [z[0] * scale[0], z[1] * scale[1], z[2] * scale[2], z[3] * scale[3]];

    // One refinement step: solve for the correction driven by X'r.
    let mut corr_rhs = [0.0; 4];
    for (row, &y) in basis.iter().zip(log_prices) {
        let r = y - theta[0] - theta[1] * row[0] - theta[2] * row[1] - theta[3] * row[2];
        corr_rhs[0] += r;
        corr_rhs[1] += row[0] * r;
        corr_rhs[2] += row[1] * r;
        corr_rhs[3] += row[2] * r;
    }
    for i in 0..4 {
        corr_rhs[i] *= scale[i];
    }
    let dz = cholesky_solve(&l, corr_rhs);
    for i in 0..4 {
        theta[i] += dz[i] * scale[i];
    }

    let ssr = basis
        .iter()
        .zip(log_prices)
        .map(|(row, &y)| {
            let r = y - theta[0] - theta[1] * row[0] - theta[2] * row[1] - theta[3] * row[2];
            r * r
        })
        .sum::<f64>();
    if !ssr.is_finite() || theta.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::DegenerateBasis("non-finite solution".into()));
    }
    Ok(LinearSolution {
        a: theta[0],
        b: theta[1],
        c1: theta[2],
        c2: theta[3],
        ssr,
    })
}

/// Slaved calibration cost: the residual sum of squares after the linear solve,
/// or [`INFEASIBLE`] when the candidate admits no solution.
pub fn cost(log_prices: &[f64], times: &[f64], tc: f64, m: f64, omega: f64) -> f64 {
    match solve_linear(log_prices, times, tc, m, omega) {
        Ok(sol) => sol.ssr,
        Err(_) => INFEASIBLE,
    }
}

/// Synthetic LPPLS price path; sample `i` sits at model time `i`.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub params: LpplsParams,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub level: TimescaleLevel,
    /// Epoch seconds of sample 0.
    pub start: i64,
}

/// Draws `p_i = exp(LPPLS(i) + ε_i)` with `ε_i ~ N(0, noise_sd²)` from a seeded generator.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PriceSeries, crate::Error> {
    let p = &spec.params;
    if spec.n == 0 {
        return Err(ModelError::InvalidArgument("n must be positive".into()).into());
    }
    if !(p.tc > (spec.n - 1) as f64) {
        return Err(ModelError::Domain {
            t: (spec.n - 1) as f64,
            tc: p.tc,
        }
        .into());
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(
            ModelError::InvalidArgument(format!("noise_sd must be non-negative, got {}", spec.noise_sd)).into(),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| ModelError::InvalidArgument(e.to_string()))?;
    let spacing = spec.level.spacing();
    let mut timestamps = Vec::with_capacity(spec.n);
    let mut prices = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let eps = if spec.noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let log_p = lppls_value(i as f64, p)? + eps;
        timestamps.push(spec.start + i as i64 * spacing);
        prices.push(log_p.exp());
    }
    PriceSeries::new(timestamps, prices, spec.level.clone()).map_err(|e: SeriesError| e.into())
}
