//! Monte Carlo comparison of terminal values of jump-diffusion integrals.
//!
//! `F` and `G` are sums of stochastic integrals with piecewise-constant
//! deterministic integrands against Brownian motions and compensated Poisson
//! counters, simulated exactly per interval. Under the hypotheses checked by
//! [`verify_hypotheses`] (quadratic variation densities ordered in the psd
//! sense, jump measures ordered in `cxp`) every convex `phi` satisfies
//! `E phi(F) <= E phi(G)`; [`compare`] tests this on a battery of convex
//! functions.
//!
//! When the jump measures are only ordered in `cxpi` on the orthant, the
//! inequality is guaranteed for convex `phi` whose mixed second derivatives
//! are nonnegative, and can fail for other convex functions once `d >= 2`:
//! with `F = (N_1 - 1, N_2 - 1)` and `G = (M - 2)(1, 1)`, `M ~ Poisson(2)`,
//! the hypotheses hold but `E (F_1 - F_2)^2 = 2 > 0`. Such scenarios are
//! therefore compared on the directionally convex part of the battery.

mod battery;
mod spec;

pub use battery::{
    convex_battery, directionally_convex_battery, nondecreasing_battery, TestFn, TestFunction,
};
pub use spec::{
    derive_seed, simulate_terminal, Matrix, PoissonMeasureSpec, Scenario, SideSpec, StrategySpec,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::norm2;
use crate::order::{check_order, OrderError, OrderRelation};
use crate::psd::{self, PsdError, SymMatrix};

/// Standard errors separating a violation from noise.
pub const Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    BadSpec(String),
    #[error("time grids do not match: {0}")]
    GridMismatch(String),
    #[error("hypotheses fail on {failed} of {total} intervals (use force to simulate anyway)")]
    HypothesesFailed { failed: usize, total: usize },
    #[error("no samples")]
    EmptySamples,
    #[error(transparent)]
    Psd(#[from] PsdError),
    #[error(transparent)]
    Order(#[from] OrderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCheck {
    pub start: f64,
    pub end: f64,
    /// `A A^T <= Â Â^T`.
    pub diffusion_ok: bool,
    /// Smallest eigenvalue of `Â Â^T - A A^T`.
    pub diffusion_margin: f64,
    /// Jump measures ordered in the scenario relation.
    pub jumps_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub relation: OrderRelation,
    pub intervals: Vec<IntervalCheck>,
}

impl HypothesisReport {
    pub fn holds(&self) -> bool {
        self.intervals.iter().all(|c| c.diffusion_ok && c.jumps_ok)
    }

    pub fn failures(&self) -> usize {
        self.intervals
            .iter()
            .filter(|c| !(c.diffusion_ok && c.jumps_ok))
            .count()
    }
}

/// Merges two grids with equal horizons.
fn common_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = a.iter().chain(b).copied().collect();
    g.sort_by(f64::total_cmp);
    g.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    g
}

/// Checks, per interval of the common grid, that the diffusion covariance
/// densities are psd-ordered and that the jump measures
/// `sum_j lambda_j delta_{J[:, j]}` are ordered in `rel`.
pub fn verify_hypotheses(
    f: &StrategySpec,
    g: &StrategySpec,
    rel: OrderRelation,
) -> Result<HypothesisReport, SimError> {
    f.validate()?;
    g.validate()?;
    if f.dimension() != g.dimension() {
        return Err(SimError::BadSpec("F and G differ in dimension".into()));
    }
    if (f.horizon() - g.horizon()).abs() > 1e-12 * (1.0 + f.horizon()) {
        return Err(SimError::GridMismatch(format!(
            "horizons {} and {}",
            f.horizon(),
            g.horizon()
        )));
    }
    let grid = common_grid(&f.grid, &g.grid);
    let (f, g) = (f.refine(&grid)?, g.refine(&grid)?);
    let mut intervals = Vec::with_capacity(grid.len() - 1);
    for k in 0..grid.len() - 1 {
        let h = SymMatrix::gram_rows(&f.a[k]);
        let hh = SymMatrix::gram_rows(&g.a[k]);
        let gap = hh.sub(&h)?;
        let diffusion_ok = psd::psd_leq(&h, &hh)?;
        let (nu, nu_hat) = (f.jump_measure(k)?, g.jump_measure(k)?);
        let (jumps_ok, detail) = match check_order(&nu, &nu_hat, rel) {
            Ok(v) => (v.ordered, None),
            Err(OrderError::OrthantViolation(p)) => (
                false,
                Some(format!("jump {p:?} outside the nonnegative orthant")),
            ),
            Err(e) => return Err(e.into()),
        };
        intervals.push(IntervalCheck {
            start: grid[k],
            end: grid[k + 1],
            diffusion_ok,
            diffusion_margin: gap.min_eigenvalue(),
            jumps_ok,
            detail,
        });
    }
    Ok(HypothesisReport {
        relation: rel,
        intervals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Consistent,
    Inconclusive,
    Violation,
}

/// `violation` iff `mean_f - mean_g > z (se_f + se_g)` with `z` =
/// [`Z_THRESHOLD`]; `consistent` iff the excess is within one combined
/// standard error.
pub fn decide(mean_f: f64, mean_g: f64, se_f: f64, se_g: f64) -> Decision {
    let diff = mean_f - mean_g;
    let se = se_f + se_g;
    if diff > Z_THRESHOLD * se {
        Decision::Violation
    } else if diff > se {
        Decision::Inconclusive
    } else {
        Decision::Consistent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub mean_f: f64,
    pub mean_g: f64,
    pub se_f: f64,
    pub se_g: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatteryChoice {
    /// Directionally convex functions for `cxpi`, the full battery otherwise.
    #[default]
    Auto,
    Full,
    DirectionallyConvex,
}

impl BatteryChoice {
    pub fn functions(self, rel: OrderRelation, d: usize, scale: f64) -> Vec<TestFunction> {
        match (self, rel) {
            (BatteryChoice::Full, _) => convex_battery(d, scale),
            (BatteryChoice::Auto, OrderRelation::Cx | OrderRelation::Cxp) => {
                convex_battery(d, scale)
            }
            _ => directionally_convex_battery(d, scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompareOptions {
    /// Simulate even when the hypotheses fail.
    pub force: bool,
    pub battery: BatteryChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub relation: OrderRelation,
    pub n_paths: usize,
    pub seed: u64,
    pub hypotheses: HypothesisReport,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.decision == Decision::Violation)
            .count()
    }

    pub fn row(&self, name: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Root mean square norm, used as the battery's length scale.
pub fn rms_norm(samples: &[Vec<f64>]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    (samples
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt()
}

/// Evaluates each test function on both sample sets.
pub fn compare_samples(
    f: &[Vec<f64>],
    g: &[Vec<f64>],
    battery: &[TestFunction],
) -> Vec<CompareRow> {
    battery
        .iter()
        .map(|phi| {
            let vf: Vec<f64> = f.iter().map(|x| phi.eval(x)).collect();
            let vg: Vec<f64> = g.iter().map(|x| phi.eval(x)).collect();
            let (mean_f, se_f) = mean_se(vf.iter().copied());
            let (mean_g, se_g) = mean_se(vg.iter().copied());
            CompareRow {
                name: phi.name.clone(),
                mean_f,
                mean_g,
                se_f,
                se_g,
                decision: decide(mean_f, mean_g, se_f, se_g),
            }
        })
        .collect()
}

/// Simulates `F` and `G` from independent streams derived from `seed` and
/// compares `E phi(F)` with `E phi(G)` over the battery.
pub fn compare(
    f: &StrategySpec,
    g: &StrategySpec,
    rel: OrderRelation,
    n_paths: usize,
    seed: u64,
    opts: &CompareOptions,
) -> Result<CompareReport, SimError> {
    if n_paths < 2 {
        return Err(SimError::BadSpec("need at least two paths".into()));
    }
    let hypotheses = verify_hypotheses(f, g, rel)?;
    if !opts.force && !hypotheses.holds() {
        return Err(SimError::HypothesesFailed {
            failed: hypotheses.failures(),
            total: hypotheses.intervals.len(),
        });
    }
    let fs = simulate_terminal(f, n_paths, derive_seed(seed, 0))?;
    let gs = simulate_terminal(g, n_paths, derive_seed(seed, 1))?;
    let scale = rms_norm(&gs);
    let battery = opts.battery.functions(rel, f.dimension(), scale);
    Ok(CompareReport {
        relation: rel,
        n_paths,
        seed,
        hypotheses,
        rows: compare_samples(&fs, &gs, &battery),
    })
}

/// `(Tr(Q Sigma), Tr(Q Sigma~), Tr(Q Sigma) <= Tr(Q Sigma~))` for centered
/// Gaussians and the quadratic `x^T Q x`.
pub fn gaussian_exact(
    sigma: &SymMatrix,
    sigma_tilde: &SymMatrix,
    q: &SymMatrix,
) -> Result<(f64, f64, bool), SimError> {
    for m in [sigma, sigma_tilde, q] {
        if !psd::is_psd(m, psd::default_tol(m)) {
            return Err(PsdError::NotPsd(m.min_eigenvalue()).into());
        }
    }
    let a = psd::trace_inner(q, sigma)?;
    let b = psd::trace_inner(q, sigma_tilde)?;
    Ok((a, b, a <= b + 1e-12 * (1.0 + b.abs())))
}

/// Diffusion-only spec with terminal covariance `sigma` on `[0, horizon]`.
pub fn gaussian_spec(sigma: &SymMatrix, horizon: f64) -> Result<StrategySpec, SimError> {
    let a = psd::sqrt_psd(&sigma.scale(1.0 / horizon))?;
    Ok(StrategySpec {
        grid: vec![0.0, horizon],
        a: vec![a.rows()],
        j: Vec::new(),
        lambda: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub x: f64,
    /// `min_lambda mean exp(lambda (|G| - x))`, clipped to `[0, 1]`.
    pub bound: f64,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_se: Option<f64>,
}

impl DeviationRow {
    /// Bound at least the empirical tail minus `z` standard errors.
    pub fn holds(&self) -> bool {
        match (self.tail, self.tail_se) {
            (Some(p), Some(se)) => self.bound >= p - Z_THRESHOLD * se,
            _ => true,
        }
    }
}

/// `0.05, 0.10, ..., 10`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=200).map(|k| 0.05 * k as f64).collect()
}

/// Laplace-transform tail bound `P(|F| >= x) <= inf_lambda E exp(lambda (|G| - x))`
/// estimated from samples of `G`. The mean is computed in log space.
pub fn deviation_bound(
    g_samples: &[Vec<f64>],
    x_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<Vec<DeviationRow>, SimError> {
    if g_samples.is_empty() {
        return Err(SimError::EmptySamples);
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| *l <= 0.0 || !l.is_finite()) {
        return Err(SimError::BadSpec(
            "lambda grid must be nonempty and positive".into(),
        ));
    }
    let norms: Vec<f64> = g_samples.iter().map(|x| norm2(x)).collect();
    let log_n = (norms.len() as f64).ln();
    let log_mgf: Vec<f64> = lambda_grid
        .iter()
        .map(|l| {
            let m = norms.iter().fold(f64::NEG_INFINITY, |a, r| a.max(l * r));
            m + norms.iter().map(|r| (l * r - m).exp()).sum::<f64>().ln() - log_n
        })
        .collect();
    Ok(x_grid
        .iter()
        .map(|&x| {
            let (lambda, log_b) = lambda_grid
                .iter()
                .zip(&log_mgf)
                .map(|(l, lm)| (*l, lm - l * x))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            DeviationRow {
                x,
                bound: log_b.exp().clamp(0.0, 1.0),
                lambda,
                tail: None,
                tail_se: None,
            }
        })
        .collect())
}

/// Empirical `P(|F| >= x)` and its standard error.
pub fn empirical_tail(f_samples: &[Vec<f64>], x: f64) -> (f64, f64) {
    mean_se(
        f_samples
            .iter()
            .map(|s| if norm2(s) >= x { 1.0 } else { 0.0 }),
    )
}
