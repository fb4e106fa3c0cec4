//! CMA-ES search over `(tc, m, ω)` with the linear amplitudes slaved.
//!
//! The strategy runs in the unit cube; box constraints are handled by clipping
//! each sampled candidate coordinate-wise before evaluation and adding a
//! quadratic penalty proportional to the squared clip distance to its rank
//! value. Only clipped (in-box) points are ever reported.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::model::{self, LpplsFit, INFEASIBLE};
use crate::series::{FitWindow, PriceSeries};

/// Generations over which the best cost must improve by more than the tolerance.
const STALL_GENERATIONS: usize = 10;
/// Step size (in unit-cube coordinates) below which a run has collapsed.
const MIN_STEP: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaesConfig {
    /// Offspring per generation (λ).
    pub population_size: usize,
    pub max_generations: usize,
    /// Stopping tolerance as a fraction of the run's initial cost.
    pub tol_fun: f64,
    /// Additional runs from fresh uniformly drawn means.
    pub restarts: usize,
    /// Initial step size as a fraction of each coordinate's range.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            population_size: 7,
            max_generations: 400,
            tol_fun: 1e-8,
            restarts: 3,
            initial_step: 0.3,
            seed: 0,
        }
    }
}

impl CmaesConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.population_size < 4 {
            return Err(FitError::Config(format!(
                "population size {} below 4",
                self.population_size
            )));
        }
        if !(self.tol_fun > 0.0) {
            return Err(FitError::Config("tol_fun must be positive".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(FitError::Config("initial step must be positive".into()));
        }
        if self.max_generations == 0 {
            return Err(FitError::Config("max_generations must be positive".into()));
        }
        Ok(())
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound dimensions differ");
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u), "degenerate search box");
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn to_box(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (l, h))| (l + u * (h - l)).clamp(*l, *h))
            .collect()
    }
}

/// Nonlinear parameter ranges applied during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBounds {
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
    /// `tc` may lie up to this fraction of the window span past its last sample.
    pub tc_horizon: f64,
    /// Lower `tc` offset past the last sample, in sample spacings.
    pub tc_min_offset: f64,
    /// Treat candidates whose damping ratio is below one as infeasible.
    pub enforce_damping: bool,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            m_range: (0.0, 1.0),
            omega_range: (1.0, 50.0),
            tc_horizon: 1.0 / 3.0,
            tc_min_offset: 1e-3,
            enforce_damping: false,
        }
    }
}

/// The `(tc, m, ω)` box for one window, `tc` in window-relative sample units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub tc_range: (f64, f64),
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
}

impl SearchSpace {
    /// Box for a window whose samples span `[0, last_time]`.
    pub fn for_window(last_time: f64, bounds: &SearchBounds) -> Self {
        let lo = last_time + bounds.tc_min_offset;
        let hi = (last_time + bounds.tc_horizon * last_time).max(lo + bounds.tc_min_offset);
        Self {
            tc_range: (lo, hi),
            m_range: bounds.m_range,
            omega_range: bounds.omega_range,
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(
            vec![self.tc_range.0, self.m_range.0, self.omega_range.0],
            vec![self.tc_range.1, self.m_range.1, self.omega_range.1],
        )
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    /// Best in-box point ever evaluated.
    pub x: Vec<f64>,
    pub cost: f64,
    /// Whether the run that produced `x` stopped on the cost-improvement criterion.
    pub converged: bool,
    pub generations: usize,
    pub evaluations: usize,
    /// Best-ever cost after each generation, across all runs.
    pub trace: Vec<f64>,
}

struct Strategy {
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    cs: f64,
    damps: f64,
    cc: f64,
    c1: f64,
    cmu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            lambda,
            weights,
            mu_eff,
            cs,
            damps,
            cc,
            c1,
            cmu,
            chi_n,
        }
    }
}

struct RunOutcome {
    x: Vec<f64>,
    cost: f64,
    converged: bool,
}

fn improvement_stalled(history: &[f64], tol: f64) -> bool {
    if history.len() <= STALL_GENERATIONS {
        return false;
    }
    let now = history[history.len() - 1];
    let before = history[history.len() - 1 - STALL_GENERATIONS];
    if before.is_infinite() {
        return now.is_infinite();
    }
    before - now <= tol
}

/// Minimises `cost_fn` over `bounds` with restarted (μ/μ_w, λ)-CMA-ES.
///
/// `cost_fn` may return [`INFEASIBLE`]; such candidates rank last. The result
/// is the best point ever evaluated, which always lies inside `bounds`.
pub fn minimize<F>(mut cost_fn: F, bounds: &Bounds, config: &CmaesConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = bounds.dim();
    let strategy = Strategy::new(n, config.population_size.max(4));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");

    let mut eval = |u: &[f64], evaluations: &mut usize| -> (Vec<f64>, f64) {
        let x = bounds.to_box(u);
        *evaluations += 1;
        let c = cost_fn(&x);
        (x, if c.is_nan() { INFEASIBLE } else { c })
    };

    let mut best: Option<RunOutcome> = None;
    let mut trace = Vec::new();
    let mut generations = 0;
    let mut evaluations = 0;

    for _run in 0..=config.restarts {
        let start: Vec<f64> = (0..n).map(|_| unit.sample(&mut rng)).collect();
        let (x0, c0) = eval(&start, &mut evaluations);
        let mut run = RunOutcome {
            x: x0,
            cost: c0,
            converged: false,
        };
        let mut tol = c0.is_finite().then(|| config.tol_fun * c0.abs());

        let mut mean = DVector::from_vec(start);
        let mut sigma = config.initial_step;
        let mut cov = DMatrix::<f64>::identity(n, n);
        let mut ps = DVector::<f64>::zeros(n);
        let mut pc = DVector::<f64>::zeros(n);
        let mut history: Vec<f64> = vec![run.cost];

        for gen in 0..config.max_generations {
            generations += 1;
            let eig = SymmetricEigen::new(cov.clone());
            let basis = eig.eigenvectors;
            let diag: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(1e-300).sqrt()).collect();

            let mut samples: Vec<DVector<f64>> = Vec::with_capacity(strategy.lambda);
            let mut raw_costs = Vec::with_capacity(strategy.lambda);
            let mut clip_dist = Vec::with_capacity(strategy.lambda);
            for _ in 0..strategy.lambda {
                let z = DVector::from_fn(n, |i, _| {
                    diag[i] * {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        v
                    }
                });
                let u = &mean + sigma * (&basis * z);
                let clipped: Vec<f64> = u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let d2: f64 = u.iter().zip(&clipped).map(|(a, b)| (a - b) * (a - b)).sum();
                let (x, c) = eval(&clipped, &mut evaluations);
                if c < run.cost {
                    run.cost = c;
                    run.x = x;
                }
                if tol.is_none() && c.is_finite() {
                    tol = Some(config.tol_fun * c.abs());
                }
                samples.push(u);
                raw_costs.push(c);
                clip_dist.push(d2);
            }

            let mut finite: Vec<f64> = raw_costs.iter().copied().filter(|c| c.is_finite()).collect();
            finite.sort_by(f64::total_cmp);
            let penalty_weight = finite.get(finite.len() / 2).map(|m| m.abs()).unwrap_or(0.0).max(1e-12);
            let ranked: Vec<f64> = raw_costs
                .iter()
                .zip(&clip_dist)
                .map(|(c, d2)| c + penalty_weight * d2)
                .collect();
            let mut order: Vec<usize> = (0..strategy.lambda).collect();
            order.sort_by(|&a, &b| ranked[a].total_cmp(&ranked[b]).then(a.cmp(&b)));

            let old_mean = mean.clone();
            mean = DVector::zeros(n);
            for (w, &k) in strategy.weights.iter().zip(&order) {
                mean += *w * &samples[k];
            }
            let y_w = (&mean - &old_mean) / sigma;

            let inv_sqrt = {
                let inv = DVector::from_iterator(n, diag.iter().map(|d| 1.0 / d));
                &basis * DMatrix::from_diagonal(&inv) * basis.transpose()
            };
            ps = (1.0 - strategy.cs) * &ps
                + (strategy.cs * (2.0 - strategy.cs) * strategy.mu_eff).sqrt() * (&inv_sqrt * &y_w);
            let ps_norm = ps.norm();
            let hsig = ps_norm / (1.0 - (1.0 - strategy.cs).powi(2 * (gen as i32 + 1))).sqrt()
                < (1.4 + 2.0 / (n as f64 + 1.0)) * strategy.chi_n;
            let hsig_f = if hsig { 1.0 } else { 0.0 };
            pc = (1.0 - strategy.cc) * &pc
                + hsig_f * (strategy.cc * (2.0 - strategy.cc) * strategy.mu_eff).sqrt() * &y_w;

            let mut rank_mu = DMatrix::<f64>::zeros(n, n);
            for (w, &k) in strategy.weights.iter().zip(&order) {
                let y = (&samples[k] - &old_mean) / sigma;
                rank_mu += *w * &y * y.transpose();
            }
            let c1a = strategy.c1 * (1.0 - (1.0 - hsig_f) * strategy.cc * (2.0 - strategy.cc));
            cov = (1.0 - c1a - strategy.cmu) * &cov + strategy.c1 * (&pc * pc.transpose()) + strategy.cmu * rank_mu;
            cov = 0.5 * (&cov + cov.transpose());
            sigma *= ((strategy.cs / strategy.damps) * (ps_norm / strategy.chi_n - 1.0))
                .min(1.0)
                .exp();

            history.push(run.cost);
            let global_best = best.as_ref().map_or(run.cost, |b| b.cost.min(run.cost));
            trace.push(global_best);

            let tol_abs = tol.unwrap_or(0.0);
            let spread = match (finite.first(), finite.last()) {
                (Some(lo), Some(hi)) => hi - lo,
                _ => f64::INFINITY,
            };
            if improvement_stalled(&history, tol_abs) && (spread <= tol_abs || run.cost.is_infinite()) {
                break;
            }
            let max_axis = diag.iter().cloned().fold(0.0, f64::max);
            if sigma * max_axis < MIN_STEP || !sigma.is_finite() || cov.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        run.converged = improvement_stalled(&history, tol.unwrap_or(0.0));

        best = match best {
            Some(b) if b.cost <= run.cost => Some(b),
            _ => Some(run),
        };
    }

    let best = best.expect("at least one run");
    Minimum {
        x: best.x,
        cost: best.cost,
        converged: best.converged,
        generations,
        evaluations,
        trace,
    }
}

/// Calibrates the LPPLS model on one window.
pub fn fit_window(
    series: &PriceSeries,
    window: &FitWindow,
    bounds: &SearchBounds,
    config: &CmaesConfig,
) -> Result<LpplsFit, FitError> {
    config.validate()?;
    if window.t2_index >= series.len() {
        return Err(FitError::Config(format!(
            "window end {} outside series of length {}",
            window.t2_index,
            series.len()
        )));
    }
    let window = FitWindow::new(window.t1_index, window.t2_index)?;
    let times = series.window_times(&window);
    let logs = series.window_log_prices(&window);
    let last = *times.last().expect("non-empty window");
    let space = SearchSpace::for_window(last, bounds);

    let objective = |x: &[f64]| -> f64 {
        match model::solve_linear(&logs, &times, x[0], x[1], x[2]) {
            Ok(sol) => {
                if bounds.enforce_damping && damping_ratio(x[1], x[2], sol.b, sol.c1, sol.c2) < 1.0 {
                    INFEASIBLE
                } else {
                    sol.ssr
                }
            }
            Err(_) => INFEASIBLE,
        }
    };
    let min = minimize(objective, &space.bounds(), config);
    if !min.cost.is_finite() {
        return Err(FitError::NoFit {
            t1: window.t1_index,
            t2: window.t2_index,
        });
    }
    let (tc, m, omega) = (min.x[0], min.x[1], min.x[2]);
    let sol = model::solve_linear(&logs, &times, tc, m, omega).map_err(|_| FitError::NoFit {
        t1: window.t1_index,
        t2: window.t2_index,
    })?;
    Ok(LpplsFit {
        params: sol.params(tc, m, omega),
        ssr: sol.ssr,
        window,
        converged: min.converged,
    })
}

/// `m|B| / (ω sqrt(C1² + C2²))`; infinite when there is no oscillation.
pub fn damping_ratio(m: f64, omega: f64, b: f64, c1: f64, c2: f64) -> f64 {
    let c = c1.hypot(c2);
    if c == 0.0 {
        f64::INFINITY
    } else {
        m * b.abs() / (omega * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(n: usize, lo: f64, hi: f64) -> Bounds {
        Bounds::new(vec![lo; n], vec![hi; n])
    }

    #[test]
    fn sphere_inside_box() {
        let center = [0.3, -1.2, 2.0];
        let sphere = |x: &[f64]| x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
        let cfg = CmaesConfig {
            restarts: 0,
            tol_fun: 1e-14,
            ..Default::default()
        };
        let min = minimize(sphere, &unit_box(3, -5.0, 5.0), &cfg);
        assert!(min.cost <= 1e-8, "cost {}", min.cost);
    }

    #[test]
    fn flat_landscape_returns_in_box_point() {
        let bounds = unit_box(3, 2.0, 3.0);
        let min = minimize(|_| 4.25, &bounds, &CmaesConfig::default());
        assert_eq!(min.cost, 4.25);
        assert!(bounds.contains(&min.x));
        assert!(min.converged);
    }

    #[test]
    fn all_infeasible_reports_sentinel() {
        let bounds = unit_box(3, 0.0, 1.0);
        let min = minimize(|_| INFEASIBLE, &bounds, &CmaesConfig::default());
        assert_eq!(min.cost, INFEASIBLE);
        assert!(bounds.contains(&min.x));
    }

    #[test]
    fn optimum_on_boundary_stays_in_box() {
        // Minimum of the unconstrained quadratic lies outside; constrained optimum at x = 1.
        let bounds = unit_box(3, 0.0, 1.0);
        let f = |x: &[f64]| x.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>();
        let min = minimize(f, &bounds, &CmaesConfig::default());
        assert!(bounds.contains(&min.x));
        assert!((min.cost - 3.0).abs() < 1e-6, "cost {}", min.cost);
    }

    #[test]
    fn trace_is_nonincreasing() {
        let f = |x: &[f64]| (x[0] - 0.1).powi(2) + 10.0 * (x[1] - x[0] * x[0]).powi(2) + x[2].abs();
        let min = minimize(
            f,
            &unit_box(3, -2.0, 2.0),
            &CmaesConfig {
                seed: 5,
                ..Default::default()
            },
        );
        assert!(min.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*min.trace.last().unwrap(), min.cost);
    }

    #[test]
    fn seeded_runs_repeat() {
        let f = |x: &[f64]| (x[0] - 0.5).powi(2) + (x[1] * 3.0).sin() + x[2] * x[2];
        let cfg = CmaesConfig {
            seed: 42,
            ..Default::default()
        };
        let b = unit_box(3, -1.0, 1.0);
        assert_eq!(minimize(f, &b, &cfg), minimize(f, &b, &cfg));
    }

    #[test]
    fn search_space_for_window() {
        let s = SearchSpace::for_window(199.0, &SearchBounds::default());
        assert!(s.tc_range.0 > 199.0);
        assert!((s.tc_range.1 - (199.0 + 199.0 / 3.0)).abs() < 1e-12);
        assert_eq!(s.m_range, (0.0, 1.0));
        assert_eq!(s.omega_range, (1.0, 50.0));
    }

    #[test]
    fn config_validation() {
        assert!(CmaesConfig {
            population_size: 3,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CmaesConfig {
            tol_fun: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CmaesConfig::default().validate().is_ok());
    }

    #[test]
    fn damping_ratio_cases() {
        assert!((damping_ratio(0.5, 10.0, -1.0, 0.04, 0.0) - 1.25).abs() < 1e-12);
        assert_eq!(damping_ratio(0.5, 10.0, -1.0, 0.0, 0.0), f64::INFINITY);
    }
}
