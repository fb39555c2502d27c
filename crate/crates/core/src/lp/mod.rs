//! Self-contained linear programming.
//!
//! [`solve`] runs a two-phase bounded-variable primal simplex with Bland's
//! anti-cycling rule on a dense tableau. Every outcome carries a certificate:
//! an optimal primal/dual pair, a Farkas vector proving infeasibility, or an
//! improving ray proving unboundedness. [`solve_exact`] runs the same engine
//! over exact rationals for small instances.

mod scalar;
mod simplex;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scalar::LpScalar;
use simplex::{run, RawSolution, RawStatus, StandardForm};

/// Feasibility tolerance on scaled rows.
pub const FEAS_TOL: f64 = 1e-8;
/// Complementary slackness tolerance.
pub const CS_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {row} has {found} coefficients, expected {expected}")]
    BadDimensions {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("variable {0} has lower bound above upper bound")]
    InconsistentBounds(usize),
    #[error("numerical failure after {pivots} pivots: {reason}")]
    NumericalFailure { pivots: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `opt c^T x` subject to rows and per-variable bounds.
///
/// Bounds default to `[0, +inf)`; use `f64::NEG_INFINITY` / `f64::INFINITY`
/// for free directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        Self {
            sense,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    /// A program with a zero objective, used for pure feasibility questions.
    pub fn feasibility(num_vars: usize) -> Self {
        Self::new(num_vars, Sense::Minimize)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) -> &mut Self {
        assert_eq!(objective.len(), self.num_vars(), "objective length");
        self.objective = objective;
        self
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    /// Adds a row given as `(variable, coefficient)` pairs; repeated
    /// variables accumulate.
    pub fn add_sparse(
        &mut self,
        terms: &[(usize, f64)],
        relation: Relation,
        rhs: f64,
    ) -> &mut Self {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::BadDimensions {
                    row,
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if c.coeffs.iter().any(|a| !a.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::NonFinite("constraint"));
            }
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::NonFinite("bounds"));
            }
            if l > u {
                return Err(LpError::InconsistentBounds(j));
            }
        }
        Ok(())
    }

    /// Row scale factors mapping each row to unit max coefficient.
    fn row_scales(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let m = c.coeffs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect()
    }

    fn standard_form<T: LpScalar>(&self, scales: &[f64]) -> StandardForm<T> {
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let scale = |x: f64, s: f64| {
            if s == 1.0 {
                T::from_f64(x)
            } else {
                T::from_f64(x * s)
            }
        };
        StandardForm {
            a: self
                .constraints
                .iter()
                .zip(scales)
                .map(|(c, &s)| c.coeffs.iter().map(|&a| scale(a, s)).collect())
                .collect(),
            b: self
                .constraints
                .iter()
                .zip(scales)
                .map(|(c, &s)| scale(c.rhs, s))
                .collect(),
            rel: self.constraints.iter().map(|c| c.relation).collect(),
            c: self
                .objective
                .iter()
                .map(|&c| T::from_f64(sign * c))
                .collect(),
            lower: self
                .lower
                .iter()
                .map(|&l| l.is_finite().then(|| T::from_f64(l)))
                .collect(),
            upper: self
                .upper
                .iter()
                .map(|&u| u.is_finite().then(|| T::from_f64(u)))
                .collect(),
        }
    }

    fn max_pivots(&self) -> usize {
        50 * (self.num_vars() + 2 * self.constraints.len()) + 1000
    }

    /// Largest violation of any row or bound by `x`, measured on rows scaled
    /// to unit max coefficient.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let scales = self.row_scales();
        let mut worst = 0.0_f64;
        for (c, s) in self.constraints.iter().zip(&scales) {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let gap = (lhs - c.rhs) * s;
            let viol = match c.relation {
                Relation::Le => gap.max(0.0),
                Relation::Ge => (-gap).max(0.0),
                Relation::Eq => gap.abs(),
            };
            worst = worst.max(viol);
        }
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Margin by which `z` certifies infeasibility: `min_box (z^T A) x - z^T b`
    /// after normalizing `z` on the scaled rows. A valid certificate has the
    /// slack-compatible sign pattern (`z >= 0` on `<=` rows, `z <= 0` on `>=`
    /// rows) and a positive margin. Returns `None` if the sign pattern is
    /// violated or the minimum over the bounds is unbounded.
    pub fn farkas_margin(&self, z: &[f64]) -> Option<f64> {
        let scales = self.row_scales();
        let zs: Vec<f64> = z.iter().zip(&scales).map(|(zi, s)| zi / s).collect();
        let norm = zs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if norm == 0.0 {
            return None;
        }
        let tol = FEAS_TOL;
        let mut zb = 0.0;
        let mut r = vec![0.0; self.num_vars()];
        for ((c, zi), s) in self.constraints.iter().zip(&zs).zip(&scales) {
            let zi = zi / norm;
            let ok = match c.relation {
                Relation::Le => zi >= -tol,
                Relation::Ge => zi <= tol,
                Relation::Eq => true,
            };
            if !ok {
                return None;
            }
            zb += zi * c.rhs * s;
            for (rj, a) in r.iter_mut().zip(&c.coeffs) {
                *rj += zi * a * s;
            }
        }
        let mut min_box = 0.0;
        for (j, rj) in r.iter().enumerate() {
            if rj.abs() <= tol {
                continue;
            }
            let bound = if *rj > 0.0 {
                self.lower[j]
            } else {
                self.upper[j]
            };
            if !bound.is_finite() {
                return None;
            }
            min_box += rj * bound;
        }
        Some(min_box - zb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Optimal point, or the last phase-one point when infeasible.
    pub primal: Vec<f64>,
    /// Row duals for the program's own sense (optimal only):
    /// `objective = A^T dual + reduced_costs`.
    pub dual: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub farkas: Option<Vec<f64>>,
    pub ray: Option<Vec<f64>>,
    pub pivots: usize,
    pub primal_residual: f64,
    pub complementarity_residual: f64,
}

/// Phase-one result.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// Farkas vector, see [`LinearProgram::farkas_margin`].
    Infeasible(Vec<f64>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let scales = lp.row_scales();
    let form: StandardForm<f64> = lp.standard_form(&scales);
    let raw = run(&form, false, lp.max_pivots())?;
    finish(lp, &scales, raw)
}

pub fn check_feasible(lp: &LinearProgram) -> Result<Feasibility, LpError> {
    lp.validate()?;
    let scales = lp.row_scales();
    let form: StandardForm<f64> = lp.standard_form(&scales);
    let raw = run(&form, true, lp.max_pivots())?;
    match raw.status {
        RawStatus::Infeasible => {
            let z = unscale_farkas(raw.farkas.unwrap_or_default(), &scales);
            check_certificate(lp, &z, raw.pivots)?;
            Ok(Feasibility::Infeasible(z))
        }
        _ => {
            let x = clamp_to_bounds(lp, raw.x);
            let res = lp.primal_residual(&x);
            if res > FEAS_TOL {
                return Err(LpError::NumericalFailure {
                    pivots: raw.pivots,
                    reason: format!("feasible point residual {res:e}"),
                });
            }
            Ok(Feasibility::Feasible(x))
        }
    }
}

fn unscale_farkas(z: Vec<f64>, scales: &[f64]) -> Vec<f64> {
    z.into_iter().zip(scales).map(|(z, s)| z * s).collect()
}

fn check_certificate(lp: &LinearProgram, z: &[f64], pivots: usize) -> Result<(), LpError> {
    match lp.farkas_margin(z) {
        Some(m) if m > FEAS_TOL => Ok(()),
        other => Err(LpError::NumericalFailure {
            pivots,
            reason: format!("Farkas certificate failed verification (margin {other:?})"),
        }),
    }
}

fn clamp_to_bounds(lp: &LinearProgram, mut x: Vec<f64>) -> Vec<f64> {
    for (j, v) in x.iter_mut().enumerate() {
        let (l, u) = lp.bounds(j);
        *v = v.clamp(l, u);
    }
    x
}

fn finish(lp: &LinearProgram, scales: &[f64], raw: RawSolution<f64>) -> Result<LpOutcome, LpError> {
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let pivots = raw.pivots;
    match raw.status {
        RawStatus::Infeasible => {
            let z = unscale_farkas(raw.farkas.unwrap_or_default(), scales);
            check_certificate(lp, &z, pivots)?;
            Ok(LpOutcome {
                status: LpStatus::Infeasible,
                primal: raw.x,
                dual: Vec::new(),
                reduced_costs: Vec::new(),
                objective: f64::NAN,
                farkas: Some(z),
                ray: None,
                pivots,
                primal_residual: f64::NAN,
                complementarity_residual: f64::NAN,
            })
        }
        RawStatus::Unbounded => Ok(LpOutcome {
            status: LpStatus::Unbounded,
            objective: sign * f64::NEG_INFINITY,
            primal_residual: lp.primal_residual(&raw.x),
            primal: raw.x,
            dual: Vec::new(),
            reduced_costs: Vec::new(),
            farkas: None,
            ray: raw.ray,
            pivots,
            complementarity_residual: f64::NAN,
        }),
        RawStatus::Optimal => {
            let x = clamp_to_bounds(lp, raw.x);
            let dual: Vec<f64> = raw
                .y
                .iter()
                .zip(scales)
                .map(|(y, s)| sign * y * s)
                .collect();
            let reduced_costs: Vec<f64> = raw.reduced.iter().map(|d| sign * d).collect();
            let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            let primal_residual = lp.primal_residual(&x);
            let complementarity_residual = complementarity(lp, scales, &x, &raw.y, &raw.reduced);
            if primal_residual > FEAS_TOL || complementarity_residual > CS_TOL {
                return Err(LpError::NumericalFailure {
                    pivots,
                    reason: format!(
                        "optimal residuals primal {primal_residual:e}, complementarity {complementarity_residual:e}"
                    ),
                });
            }
            Ok(LpOutcome {
                status: LpStatus::Optimal,
                primal: x,
                dual,
                reduced_costs,
                objective,
                farkas: None,
                ray: None,
                pivots,
                primal_residual,
                complementarity_residual,
            })
        }
    }
}

/// Max over rows of `|y_i| * |slack_i|` and over columns of
/// `|d_j| * dist(x_j, nearest bound)`, in the scaled frame.
fn complementarity(lp: &LinearProgram, scales: &[f64], x: &[f64], y: &[f64], d: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for ((c, s), yi) in lp.constraints.iter().zip(scales).zip(y) {
        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        worst = worst.max(yi.abs() * ((c.rhs - lhs) * s).abs());
    }
    for (j, (dj, xj)) in d.iter().zip(x).enumerate() {
        let (l, u) = lp.bounds(j);
        let dist = (xj - l).abs().min((u - xj).abs());
        if dist.is_finite() {
            worst = worst.max(dj.abs() * dist);
        } else {
            worst = worst.max(dj.abs());
        }
    }
    worst
}

/// Exact rational outcome of [`solve_exact`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub status: LpStatus,
    pub primal: Vec<BigRational>,
    pub objective: Option<BigRational>,
    pub farkas: Option<Vec<BigRational>>,
}

/// Solves `lp` in exact rational arithmetic (coefficients are converted from
/// their exact double values). Intended for small programs.
pub fn solve_exact(lp: &LinearProgram) -> Result<ExactOutcome, LpError> {
    lp.validate()?;
    let ones = vec![1.0; lp.constraints.len()];
    let form: StandardForm<BigRational> = lp.standard_form(&ones);
    let raw = run(&form, false, lp.max_pivots())?;
    let status = match raw.status {
        RawStatus::Optimal => LpStatus::Optimal,
        RawStatus::Infeasible => LpStatus::Infeasible,
        RawStatus::Unbounded => LpStatus::Unbounded,
    };
    let objective = (status == LpStatus::Optimal).then(|| {
        lp.objective
            .iter()
            .zip(&raw.x)
            .fold(BigRational::zero(), |acc, (c, v)| {
                acc + BigRational::from_f64(*c) * v.clone()
            })
    });
    Ok(ExactOutcome {
        status,
        primal: raw.x,
        objective,
        farkas: raw.farkas,
    })
}

/// Exact check that `x` satisfies every row and bound of `lp`.
pub fn exact_feasible(lp: &LinearProgram, x: &[BigRational]) -> bool {
    for c in &lp.constraints {
        let lhs = c
            .coeffs
            .iter()
            .zip(x)
            .fold(BigRational::zero(), |acc, (a, v)| {
                acc + BigRational::from_f64(*a) * v.clone()
            });
        let gap = lhs - BigRational::from_f64(c.rhs);
        let ok = match c.relation {
            Relation::Le => !gap.is_positive(),
            Relation::Ge => !gap.is_negative(),
            Relation::Eq => gap.is_zero(),
        };
        if !ok {
            return false;
        }
    }
    x.iter().enumerate().all(|(j, v)| {
        let (l, u) = lp.bounds(j);
        (!l.is_finite() || *v >= BigRational::from_f64(l))
            && (!u.is_finite() || *v <= BigRational::from_f64(u))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_single_variable() {
        let mut lp = LinearProgram::new(1, Sense::Maximize);
        lp.set_objective(vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 3.0);
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.primal[0] - 3.0).abs() < 1e-12);
        assert!((out.objective - 3.0).abs() < 1e-12);
        assert!((out.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_with_farkas() {
        let mut lp = LinearProgram::feasibility(1);
        lp.add_constraint(vec![1.0], Relation::Le, -1.0);
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        let z = out.farkas.unwrap();
        assert!(z[0] > 0.0);
        assert!(lp.farkas_margin(&z).unwrap() > 0.5);
        assert!(!check_feasible(&lp).unwrap().is_feasible());
    }

    #[test]
    fn unbounded_ray_improves() {
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, -1.0], Relation::Le, 1.0);
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
        let ray = out.ray.unwrap();
        assert!(ray[0] + ray[1] > 0.0);
        assert!(ray[0] - ray[1] <= 1e-12);
        assert!(ray.iter().all(|r| *r >= -1e-12));
    }

    #[test]
    fn free_and_boxed_variables() {
        // min x + 2y, x free, y in [-1, 4], x + y >= 2, x - y <= 1
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        lp.set_objective(vec![1.0, 2.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, -1.0, 4.0);
        lp.add_constraint(vec![1.0, 1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0, -1.0], Relation::Le, 1.0);
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.primal[0] - 1.5).abs() < 1e-9);
        assert!((out.primal[1] - 0.5).abs() < 1e-9);
        assert!((out.objective - 2.5).abs() < 1e-9);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 1 twice, x - y = 0.
        let mut lp = LinearProgram::feasibility(2);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_constraint(vec![2.0, 2.0], Relation::Eq, 2.0);
        lp.add_constraint(vec![1.0, -1.0], Relation::Eq, 0.0);
        match check_feasible(&lp).unwrap() {
            Feasibility::Feasible(x) => {
                assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_agrees_on_small_program() {
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(vec![3.0, 2.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Le, 4.0);
        lp.add_constraint(vec![1.0, 3.0], Relation::Le, 6.0);
        lp.set_bounds(0, 0.0, 3.0);
        let exact = solve_exact(&lp).unwrap();
        assert_eq!(exact.status, LpStatus::Optimal);
        assert_eq!(exact.objective, Some(BigRational::from_f64(11.0)));
        assert!(exact_feasible(&lp, &exact.primal));
        let float = solve(&lp).unwrap();
        assert!((float.objective - 11.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        let mut lp = LinearProgram::feasibility(2);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve(&lp), Err(LpError::BadDimensions { .. })));
        let mut lp = LinearProgram::feasibility(1);
        lp.set_bounds(0, 2.0, 1.0);
        assert_eq!(solve(&lp), Err(LpError::InconsistentBounds(0)));
    }
}
