//! Deciding `mu <= nu` in the convex orders, with certificates.
//!
//! A positive answer comes with a coupling `pi` whose rows reproduce `mu`
//! and whose rows are mean-preserving (or mean-increasing for `cxpi`)
//! spreads. A negative answer comes with a discretely convex function on the
//! union of the supports that integrates to more under `mu` than under `nu`.
//! The two are computed by separate linear programs, so agreement between
//! them is a real consistency check.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, convex_weights, GeometryError};
use crate::lp::{self, Feasibility, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::measures::{dot, f64_to_rational, max_norm_dist, DiscreteMeasure};
use crate::psd::{self, PsdError, SymMatrix};

/// Residual tolerance for coupling and separator invariants.
pub const CERT_TOL: f64 = 1e-8;

/// Separating gaps at or below this count as ordered.
pub const GAP_TOL: f64 = 1e-7;

/// Coordinates above `-ORTHANT_TOL` count as nonnegative.
pub const ORTHANT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("dimension mismatch: mu has dimension {mu}, nu has {nu}")]
    DimensionMismatch { mu: usize, nu: usize },
    #[error("point {0:?} lies outside the nonnegative orthant")]
    OrthantViolation(Vec<f64>),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("mu is not dominated by nu in the convex order")]
    NotOrdered,
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Psd(#[from] PsdError),
}

/// The three orders: all convex test functions, nonnegative convex ones,
/// and nonnegative nondecreasing convex ones on the orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderRelation {
    Cx,
    Cxp,
    Cxpi,
}

impl OrderRelation {
    pub const ALL: [OrderRelation; 3] = [Self::Cx, Self::Cxp, Self::Cxpi];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cx => "cx",
            Self::Cxp => "cxp",
            Self::Cxpi => "cxpi",
        }
    }
}

impl fmt::Display for OrderRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderRelation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cx" => Ok(Self::Cx),
            "cxp" => Ok(Self::Cxp),
            "cxpi" => Ok(Self::Cxpi),
            _ => Err(format!("unknown relation {s:?} (expected cx, cxp or cxpi)")),
        }
    }
}

/// Transport plan from the atoms of `mu` (rows) to the atoms of `nu` (cols).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub rows: Vec<Vec<f64>>,
    pub cols: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
}

/// Values and subgradients of a convex function on a finite point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSeparator {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub subgradients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Certificate {
    Coupling(Coupling),
    Separator(ConvexSeparator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub ordered: bool,
    pub certificate: Certificate,
}

impl Verdict {
    pub fn coupling(&self) -> Option<&Coupling> {
        match &self.certificate {
            Certificate::Coupling(c) => Some(c),
            Certificate::Separator(_) => None,
        }
    }

    pub fn separator(&self) -> Option<&ConvexSeparator> {
        match &self.certificate {
            Certificate::Separator(s) => Some(s),
            Certificate::Coupling(_) => None,
        }
    }
}

/// Worst violations of the coupling invariants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CouplingResiduals {
    pub negativity: f64,
    pub rows: f64,
    pub cols: f64,
    pub barycenter: f64,
}

impl CouplingResiduals {
    pub fn max(&self) -> f64 {
        self.negativity
            .max(self.rows)
            .max(self.cols)
            .max(self.barycenter)
    }
}

/// Target masses of `points` under `m`, with every atom of `m` required to
/// appear among them.
fn targets(
    points: &[Vec<f64>],
    m: &DiscreteMeasure,
    what: &str,
) -> Result<Vec<Option<usize>>, OrderError> {
    let idx: Vec<Option<usize>> = points.iter().map(|p| m.index_of(p)).collect();
    for i in 0..m.len() {
        if !idx.contains(&Some(i)) {
            return Err(OrderError::InvalidCertificate(format!(
                "{what} atom {:?} is missing",
                m.atoms()[i].point
            )));
        }
    }
    Ok(idx)
}

impl Coupling {
    fn check_shape(&self) -> Result<(), OrderError> {
        if self.pi.len() != self.rows.len() || self.pi.iter().any(|r| r.len() != self.cols.len()) {
            return Err(OrderError::InvalidCertificate(
                "pi has the wrong shape".into(),
            ));
        }
        Ok(())
    }

    /// Residuals in floating point.
    pub fn residuals(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        rel: OrderRelation,
    ) -> Result<CouplingResiduals, OrderError> {
        self.check_shape()?;
        let ri = targets(&self.rows, mu, "mu")?;
        let ci = targets(&self.cols, nu, "nu")?;
        let mut r = CouplingResiduals::default();
        let mut col_sums = vec![0.0; self.cols.len()];
        for (i, row) in self.pi.iter().enumerate() {
            let x = &self.rows[i];
            let mut sum = 0.0;
            let mut bary = vec![0.0; x.len()];
            for (j, p) in row.iter().enumerate() {
                r.negativity = r.negativity.max(-p);
                sum += p;
                col_sums[j] += p;
                for (b, (yk, xk)) in bary.iter_mut().zip(self.cols[j].iter().zip(x)) {
                    *b += p * (yk - xk);
                }
            }
            let target = ri[i].map_or(0.0, |k| mu.atoms()[k].mass);
            r.rows = r.rows.max((sum - target).abs());
            r.barycenter = r.barycenter.max(bary_violation(&bary, rel));
        }
        for (j, s) in col_sums.iter().enumerate() {
            let target = ci[j].map_or(0.0, |k| nu.atoms()[k].mass);
            r.cols = r.cols.max(col_violation(s - target, rel));
        }
        Ok(r)
    }

    pub fn validate(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        rel: OrderRelation,
    ) -> Result<CouplingResiduals, OrderError> {
        let r = self.residuals(mu, nu, rel)?;
        if r.negativity > 0.0 || r.max() > CERT_TOL {
            return Err(OrderError::InvalidCertificate(format!(
                "coupling residuals {r:?} exceed {CERT_TOL:e}"
            )));
        }
        Ok(r)
    }

    /// Re-checks every invariant in exact rational arithmetic on the exact
    /// values of the stored doubles (and exact masses when `mu`/`nu` carry
    /// them). Returns the worst residual.
    pub fn validate_exact(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        rel: OrderRelation,
    ) -> Result<f64, OrderError> {
        self.check_shape()?;
        let ri = targets(&self.rows, mu, "mu")?;
        let ci = targets(&self.cols, nu, "nu")?;
        let q = |v: f64| f64_to_rational(v);
        let pi: Vec<Vec<BigRational>> = self
            .pi
            .iter()
            .map(|r| r.iter().map(|v| q(*v)).collect())
            .collect();
        if pi.iter().flatten().any(|v| v.is_negative()) {
            return Err(OrderError::InvalidCertificate(
                "negative coupling entry".into(),
            ));
        }
        let mut worst = BigRational::zero();
        let mut col_sums = vec![BigRational::zero(); self.cols.len()];
        for (i, row) in pi.iter().enumerate() {
            let x: Vec<BigRational> = self.rows[i].iter().map(|v| q(*v)).collect();
            let mut sum = BigRational::zero();
            let mut bary = vec![BigRational::zero(); x.len()];
            for (j, p) in row.iter().enumerate() {
                sum += p;
                col_sums[j] += p;
                for (k, b) in bary.iter_mut().enumerate() {
                    *b += p * (q(self.cols[j][k]) - &x[k]);
                }
            }
            let target = ri[i].map_or_else(BigRational::zero, |k| mu.exact_mass(k));
            worst = worst.max((sum - target).abs());
            for b in bary {
                let v = match rel {
                    OrderRelation::Cxpi => -b,
                    _ => b.abs(),
                };
                worst = worst.max(v);
            }
        }
        for (j, s) in col_sums.into_iter().enumerate() {
            let target = ci[j].map_or_else(BigRational::zero, |k| nu.exact_mass(k));
            let diff = s - target;
            let v = match rel {
                OrderRelation::Cx => diff.abs(),
                _ => diff,
            };
            worst = worst.max(v);
        }
        let worst = crate::measures::rational_to_f64(&worst);
        if worst > CERT_TOL {
            return Err(OrderError::InvalidCertificate(format!(
                "exact coupling residual {worst:e} exceeds {CERT_TOL:e}"
            )));
        }
        Ok(worst)
    }
}

fn bary_violation(bary: &[f64], rel: OrderRelation) -> f64 {
    bary.iter()
        .map(|b| match rel {
            OrderRelation::Cxpi => (-b).max(0.0),
            _ => b.abs(),
        })
        .fold(0.0, f64::max)
}

fn col_violation(diff: f64, rel: OrderRelation) -> f64 {
    match rel {
        OrderRelation::Cx => diff.abs(),
        _ => diff.max(0.0),
    }
}

/// Validation summary for a separator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatorReport {
    /// `sum mu v - sum nu v`.
    pub gap: f64,
    /// Largest `v_p + <g_p, q - p> - v_q`.
    pub convexity_violation: f64,
}

impl ConvexSeparator {
    fn check_shape(&self, dim: usize) -> Result<(), OrderError> {
        let n = self.points.len();
        if self.values.len() != n
            || self.subgradients.len() != n
            || self
                .points
                .iter()
                .chain(&self.subgradients)
                .any(|v| v.len() != dim)
        {
            return Err(OrderError::InvalidCertificate(
                "separator has inconsistent shape".into(),
            ));
        }
        Ok(())
    }

    /// Value at an atom of one of the measures.
    fn value_at(&self, p: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|q| max_norm_dist(p, q) <= 1e-12)
    }

    /// Checks discrete convexity, the sign constraints of `rel` and strict
    /// separation. Raising each value to the maximum of the affine pieces
    /// yields an exactly convex function and moves `sum nu v` by at most the
    /// convexity violation times the mass of `nu`, so the gap must exceed
    /// that amount.
    pub fn validate(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        rel: OrderRelation,
    ) -> Result<SeparatorReport, OrderError> {
        self.check_shape(mu.dimension())?;
        let mut viol = 0.0_f64;
        for (p, (vp, gp)) in self
            .points
            .iter()
            .zip(self.values.iter().zip(&self.subgradients))
        {
            for (q, vq) in self.points.iter().zip(&self.values) {
                let lin: f64 = gp
                    .iter()
                    .zip(q.iter().zip(p))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum();
                viol = viol.max(vp + lin - vq);
            }
        }
        self.check_signs(rel, |v| *v < 0.0)?;
        let gap = self.integral(mu)? - self.integral(nu)?;
        if viol > CERT_TOL || gap <= viol * nu.total_mass() || gap <= 0.0 {
            return Err(OrderError::InvalidCertificate(format!(
                "separator gap {gap:e} with convexity violation {viol:e}"
            )));
        }
        Ok(SeparatorReport {
            gap,
            convexity_violation: viol,
        })
    }

    fn check_signs(
        &self,
        rel: OrderRelation,
        neg: impl Fn(&f64) -> bool,
    ) -> Result<(), OrderError> {
        if rel != OrderRelation::Cx && self.values.iter().any(&neg) {
            return Err(OrderError::InvalidCertificate(
                "negative separator value".into(),
            ));
        }
        if rel == OrderRelation::Cxpi && self.subgradients.iter().flatten().any(&neg) {
            return Err(OrderError::InvalidCertificate(
                "negative subgradient entry".into(),
            ));
        }
        Ok(())
    }

    fn integral(&self, m: &DiscreteMeasure) -> Result<f64, OrderError> {
        m.atoms()
            .iter()
            .map(|a| {
                self.value_at(&a.point)
                    .map(|k| a.mass * self.values[k])
                    .ok_or_else(|| {
                        OrderError::InvalidCertificate(format!("no value at atom {:?}", a.point))
                    })
            })
            .sum()
    }

    /// [`ConvexSeparator::validate`] in exact rational arithmetic.
    pub fn validate_exact(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        rel: OrderRelation,
    ) -> Result<SeparatorReport, OrderError> {
        self.check_shape(mu.dimension())?;
        let q = |v: f64| f64_to_rational(v);
        let pts: Vec<Vec<BigRational>> = self
            .points
            .iter()
            .map(|p| p.iter().map(|v| q(*v)).collect())
            .collect();
        let vals: Vec<BigRational> = self.values.iter().map(|v| q(*v)).collect();
        let grads: Vec<Vec<BigRational>> = self
            .subgradients
            .iter()
            .map(|g| g.iter().map(|v| q(*v)).collect())
            .collect();
        let mut viol = BigRational::zero();
        for p in 0..pts.len() {
            for r in 0..pts.len() {
                let mut s = vals[p].clone() - &vals[r];
                for k in 0..pts[p].len() {
                    s += &grads[p][k] * (&pts[r][k] - &pts[p][k]);
                }
                if s > viol {
                    viol = s;
                }
            }
        }
        self.check_signs(rel, |v| *v < 0.0)?;
        let integral = |m: &DiscreteMeasure| -> Result<BigRational, OrderError> {
            let mut s = BigRational::zero();
            for (i, a) in m.atoms().iter().enumerate() {
                let k = self.value_at(&a.point).ok_or_else(|| {
                    OrderError::InvalidCertificate(format!("no value at atom {:?}", a.point))
                })?;
                s += m.exact_mass(i) * &vals[k];
            }
            Ok(s)
        };
        let gap = integral(mu)? - integral(nu)?;
        let nu_mass = (0..nu.len()).fold(BigRational::zero(), |s, i| s + nu.exact_mass(i));
        let viol_f = crate::measures::rational_to_f64(&viol);
        if viol_f > CERT_TOL || gap <= &viol * nu_mass || !gap.is_positive() {
            return Err(OrderError::InvalidCertificate(format!(
                "exact separator gap {:e} with convexity violation {viol_f:e}",
                crate::measures::rational_to_f64(&gap)
            )));
        }
        Ok(SeparatorReport {
            gap: crate::measures::rational_to_f64(&gap),
            convexity_violation: viol_f,
        })
    }

    /// The piecewise-affine convex extension `max_p v_p + <g_p, y - p>`,
    /// floored at zero for the nonnegative orders.
    pub fn evaluate(&self, y: &[f64], rel: OrderRelation) -> f64 {
        let m = self
            .points
            .iter()
            .zip(self.values.iter().zip(&self.subgradients))
            .map(|(p, (v, g))| {
                v + g
                    .iter()
                    .zip(y.iter().zip(p))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        match rel {
            OrderRelation::Cx => m,
            _ => m.max(0.0),
        }
    }
}

fn check_inputs(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<(), OrderError> {
    if mu.dimension() != nu.dimension() {
        return Err(OrderError::DimensionMismatch {
            mu: mu.dimension(),
            nu: nu.dimension(),
        });
    }
    if rel == OrderRelation::Cxpi {
        if let Some(p) = mu
            .points()
            .chain(nu.points())
            .find(|p| p.iter().any(|c| *c < -ORTHANT_TOL))
        {
            return Err(OrderError::OrthantViolation(p.to_vec()));
        }
    }
    Ok(())
}

/// Decides `mu <= nu` in the order `rel` and returns a validated certificate.
pub fn check_order(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<Verdict, OrderError> {
    check_inputs(mu, nu, rel)?;
    let hull_ok = rel == OrderRelation::Cxpi || check_support_hull(mu, nu)?;
    if hull_ok {
        if let Some(c) = build_coupling(mu, nu, rel)? {
            return Ok(Verdict {
                ordered: true,
                certificate: Certificate::Coupling(c),
            });
        }
    }
    match find_separator(mu, nu, rel)? {
        Some(s) => Ok(Verdict {
            ordered: false,
            certificate: Certificate::Separator(s),
        }),
        None => Err(OrderError::NumericalFailure(
            "neither a coupling nor a separator was found".into(),
        )),
    }
}

/// Feasibility program for the coupling; variable `i * m + j` is `pi_ij`.
pub fn coupling_program(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> LinearProgram {
    let (n, m, d) = (mu.len(), nu.len(), mu.dimension());
    let mut prog = LinearProgram::feasibility(n * m);
    for (i, a) in mu.atoms().iter().enumerate() {
        let terms: Vec<(usize, f64)> = (0..m).map(|j| (i * m + j, 1.0)).collect();
        prog.add_sparse(&terms, Relation::Eq, a.mass);
    }
    let col_rel = match rel {
        OrderRelation::Cx => Relation::Eq,
        _ => Relation::Le,
    };
    for (j, b) in nu.atoms().iter().enumerate() {
        let terms: Vec<(usize, f64)> = (0..n).map(|i| (i * m + j, 1.0)).collect();
        prog.add_sparse(&terms, col_rel, b.mass);
    }
    let bary_rel = match rel {
        OrderRelation::Cxpi => Relation::Ge,
        _ => Relation::Eq,
    };
    for (i, a) in mu.atoms().iter().enumerate() {
        for k in 0..d {
            let terms: Vec<(usize, f64)> = nu
                .atoms()
                .iter()
                .enumerate()
                .map(|(j, b)| (i * m + j, b.point[k] - a.point[k]))
                .collect();
            prog.add_sparse(&terms, bary_rel, 0.0);
        }
    }
    prog
}

/// A coupling certifying `mu <= nu`, or `None` if the coupling program is
/// infeasible.
pub fn build_coupling(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<Option<Coupling>, OrderError> {
    check_inputs(mu, nu, rel)?;
    if mu.is_empty() {
        return Ok(Some(Coupling {
            rows: Vec::new(),
            cols: nu.points().map(|p| p.to_vec()).collect(),
            pi: Vec::new(),
        }));
    }
    if nu.is_empty() {
        return Ok(None);
    }
    let m = nu.len();
    let x = match lp::check_feasible(&coupling_program(mu, nu, rel))? {
        Feasibility::Feasible(x) => x,
        Feasibility::Infeasible(_) => return Ok(None),
    };
    let c = Coupling {
        rows: mu.points().map(|p| p.to_vec()).collect(),
        cols: nu.points().map(|p| p.to_vec()).collect(),
        pi: x
            .chunks(m)
            .map(|r| r.iter().map(|v| v.max(0.0)).collect())
            .collect(),
    };
    c.validate(mu, nu, rel)
        .map_err(|e| OrderError::NumericalFailure(format!("coupling failed validation: {e}")))?;
    Ok(Some(c))
}

/// Status of the coupling program solved in exact rational arithmetic.
pub fn coupling_feasible_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<bool, OrderError> {
    check_inputs(mu, nu, rel)?;
    if mu.is_empty() || nu.is_empty() {
        return Ok(mu.is_empty());
    }
    Ok(lp::solve_exact(&coupling_program(mu, nu, rel))?.status == LpStatus::Optimal)
}

/// Union of the supports, deduplicated, `mu` atoms first.
fn joint_points(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in mu.points().chain(nu.points()) {
        if !pts.iter().any(|q| max_norm_dist(p, q) <= 1e-12) {
            pts.push(p.to_vec());
        }
    }
    pts
}

/// Maximizes `sum (mu - nu) v` over discretely convex `(v, g)` on the union
/// of the supports, with `v <= 1` and `|g|_inf <= 1 / diam_1`. Returns the
/// maximizer when the optimum exceeds [`GAP_TOL`].
pub fn find_separator(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<Option<ConvexSeparator>, OrderError> {
    check_inputs(mu, nu, rel)?;
    let pts = joint_points(mu, nu);
    let (n, d) = (pts.len(), mu.dimension());
    if n == 0 {
        return Ok(None);
    }
    let diam = pts
        .iter()
        .flat_map(|p| {
            pts.iter()
                .map(move |q| p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
        })
        .fold(0.0, f64::max);
    let gmax = if diam > 0.0 { 1.0 / diam } else { 1.0 };
    let g = |p: usize, k: usize| n + p * d + k;

    let mut prog = LinearProgram::new(n * (d + 1), Sense::Maximize);
    let objective: Vec<f64> = (0..n * (d + 1))
        .map(|j| {
            if j < n {
                mu.mass_at(&pts[j]) - nu.mass_at(&pts[j])
            } else {
                0.0
            }
        })
        .collect();
    prog.set_objective(objective);
    let vlo = if rel == OrderRelation::Cx { -1.0 } else { 0.0 };
    let glo = if rel == OrderRelation::Cxpi {
        0.0
    } else {
        -gmax
    };
    for p in 0..n {
        prog.set_bounds(p, vlo, 1.0);
        for k in 0..d {
            prog.set_bounds(g(p, k), glo, gmax);
        }
    }
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            // v_q - v_p - <g_p, q - p> >= 0
            let mut terms = vec![(q, 1.0), (p, -1.0)];
            terms.extend((0..d).map(|k| (g(p, k), -(pts[q][k] - pts[p][k]))));
            prog.add_sparse(&terms, Relation::Ge, 0.0);
        }
    }
    let out = lp::solve(&prog)?;
    if out.status != LpStatus::Optimal {
        return Err(OrderError::NumericalFailure(format!(
            "separator program ended with status {:?}",
            out.status
        )));
    }
    if out.objective <= GAP_TOL {
        return Ok(None);
    }
    let s = ConvexSeparator {
        values: out.primal[..n].to_vec(),
        subgradients: (0..n)
            .map(|p| out.primal[g(p, 0)..g(p, 0) + d].to_vec())
            .collect(),
        points: pts,
    };
    s.validate(mu, nu, rel)
        .map_err(|e| OrderError::NumericalFailure(format!("separator failed validation: {e}")))?;
    Ok(Some(s))
}

/// `true` iff every atom of `mu` is a convex combination of atoms of `nu`.
pub fn check_support_hull(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<bool, OrderError> {
    if mu.dimension() != nu.dimension() {
        return Err(OrderError::DimensionMismatch {
            mu: mu.dimension(),
            nu: nu.dimension(),
        });
    }
    let targets: Vec<&[f64]> = nu.points().collect();
    for x in mu.points() {
        if convex_weights(&targets, x)?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Row-stochastic kernel from the atoms of `mu` to the atoms of `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub rows: Vec<Vec<f64>>,
    pub cols: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
}

impl Kernel {
    /// Normalizes each coupling row by its mass.
    pub fn from_coupling(c: &Coupling) -> Self {
        let k =
            c.pi.iter()
                .map(|row| {
                    let s: f64 = row.iter().sum();
                    row.iter()
                        .map(|v| if s > 0.0 { v / s } else { 0.0 })
                        .collect()
                })
                .collect();
        Self {
            rows: c.rows.clone(),
            cols: c.cols.clone(),
            k,
        }
    }

    /// Column masses of `mu K`.
    pub fn push_forward(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.cols.len()];
        for (x, row) in self.rows.iter().zip(&self.k) {
            let m = mu.mass_at(x);
            for (o, k) in out.iter_mut().zip(row) {
                *o += m * k;
            }
        }
        out
    }

    /// `|| mu K - nu ||_1`, counting `nu` atoms missing from the columns.
    pub fn l1_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let pushed = self.push_forward(mu);
        let mut err: f64 = self
            .cols
            .iter()
            .zip(&pushed)
            .map(|(y, m)| (m - nu.mass_at(y)).abs())
            .sum();
        for a in nu.atoms() {
            if !self
                .cols
                .iter()
                .any(|y| max_norm_dist(y, &a.point) <= 1e-12)
            {
                err += a.mass;
            }
        }
        err
    }

    /// Largest max-norm distance between a row's barycenter and its atom.
    pub fn barycenter_residual(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.k)
            .map(|(x, row)| {
                let mut b: Vec<f64> = x.iter().map(|v| -v).collect();
                for (y, w) in self.cols.iter().zip(row) {
                    for (bk, yk) in b.iter_mut().zip(y) {
                        *bk += w * yk;
                    }
                }
                b.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of a row sum from one.
    pub fn stochasticity_residual(&self) -> f64 {
        self.k
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMethod {
    /// Composition of one-point transfers.
    Iterative,
    /// The transfer loop stalled and the coupling program produced `K`.
    LpFallback,
    /// Built directly from the coupling program.
    Lp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub kernel: Kernel,
    pub method: KernelMethod,
    pub rounds: usize,
    /// Why the transfer loop stopped early, when it did.
    pub stall_reason: Option<String>,
}

/// Kernel from the coupling program for `cx`.
pub fn build_kernel_lp(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<KernelReport, OrderError> {
    let c = build_coupling(mu, nu, OrderRelation::Cx)?.ok_or(OrderError::NotOrdered)?;
    Ok(KernelReport {
        kernel: Kernel::from_coupling(&c),
        method: KernelMethod::Lp,
        rounds: 0,
        stall_reason: None,
    })
}

/// Builds `K` with `mu K = nu` by repeatedly spreading excess mass at a
/// point `x` onto a witness simplex inside `C_x`.
///
/// Each round moves a fraction `eps` of the excess `rho(x) - nu(x)`, with
/// `eps` the first value of `1, 1/2, 1/4, ...` (not below `eps_floor`) that
/// keeps the current measure `cx`-below `nu`. If no excess point admits a
/// move, or `max_rounds` is reached, the kernel comes from the coupling
/// program instead and the report says so.
pub fn build_kernel_iterative(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    max_rounds: usize,
    eps_floor: f64,
) -> Result<KernelReport, OrderError> {
    if !check_order(mu, nu, OrderRelation::Cx)?.ordered {
        return Err(OrderError::NotOrdered);
    }
    let d = mu.dimension();
    // nu atoms first, so column j < nu.len() is nu atom j.
    let pts = joint_points(nu, mu);
    let np = pts.len();
    let nu_mass: Vec<f64> = pts.iter().map(|p| nu.mass_at(p)).collect();
    let mut plan = vec![vec![0.0; np]; mu.len()];
    for (i, a) in mu.atoms().iter().enumerate() {
        let p = pts
            .iter()
            .position(|q| max_norm_dist(q, &a.point) <= 1e-12)
            .unwrap();
        plan[i][p] = a.mass;
    }
    let rho_of = |plan: &[Vec<f64>]| -> Vec<f64> {
        (0..np).map(|p| plan.iter().map(|r| r[p]).sum()).collect()
    };
    let measure_of = |rho: &[f64]| {
        DiscreteMeasure::from_pairs(d, pts.iter().cloned().zip(rho.iter().map(|m| m.max(0.0))))
    };

    let mut rounds = 0;
    let mut stall_reason = None;
    loop {
        let rho = rho_of(&plan);
        let excess: Vec<usize> = (0..np).filter(|&p| rho[p] > nu_mass[p] + 1e-12).collect();
        if excess.is_empty() {
            break;
        }
        if rounds >= max_rounds {
            stall_reason = Some(format!("no convergence within {max_rounds} rounds"));
            break;
        }
        let current = measure_of(&rho).map_err(|e| OrderError::NumericalFailure(e.to_string()))?;
        let mut moved = false;
        for &p in &excess {
            let Ok(w) = geometry::find_witness(&current, nu, &pts[p]) else {
                continue;
            };
            let targets: Vec<usize> = w.points.iter().map(|y| nu.index_of(y).unwrap()).collect();
            let excess_mass = rho[p] - nu_mass[p];
            let mut eps = 1.0;
            while eps >= eps_floor {
                let frac = eps * excess_mass / rho[p];
                let mut next = plan.clone();
                for row in next.iter_mut() {
                    let out = frac * row[p];
                    if out == 0.0 {
                        continue;
                    }
                    row[p] -= out;
                    for (t, a) in targets.iter().zip(&w.weights) {
                        row[*t] += out * a;
                    }
                }
                let cand = measure_of(&rho_of(&next))
                    .map_err(|e| OrderError::NumericalFailure(e.to_string()))?;
                if build_coupling(&cand, nu, OrderRelation::Cx)?.is_some() {
                    plan = next;
                    moved = true;
                    break;
                }
                eps *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            stall_reason = Some(format!("no admissible transfer with eps >= {eps_floor:e}"));
            break;
        }
        rounds += 1;
    }

    if stall_reason.is_some() {
        let mut report = build_kernel_lp(mu, nu)?;
        report.method = KernelMethod::LpFallback;
        report.rounds = rounds;
        report.stall_reason = stall_reason;
        return Ok(report);
    }
    let k = mu
        .atoms()
        .iter()
        .zip(&plan)
        .map(|(a, row)| row[..nu.len()].iter().map(|v| v / a.mass).collect())
        .collect();
    Ok(KernelReport {
        kernel: Kernel {
            rows: mu.points().map(|p| p.to_vec()).collect(),
            cols: nu.points().map(|p| p.to_vec()).collect(),
            k,
        },
        method: KernelMethod::Iterative,
        rounds,
        stall_reason: None,
    })
}

/// `Tr(Q H) + int x^T Q x dnu <= Tr(Q H*) + int x^T Q x dnu* + 1e-10`.
pub fn check_mixed_local_condition(
    q: &SymMatrix,
    h: &SymMatrix,
    hstar: &SymMatrix,
    nu: &DiscreteMeasure,
    nustar: &DiscreteMeasure,
) -> Result<bool, OrderError> {
    let d = q.dim();
    for found in [h.dim(), hstar.dim(), nu.dimension(), nustar.dimension()] {
        if found != d {
            return Err(OrderError::DimensionMismatch { mu: d, nu: found });
        }
    }
    if !psd::is_psd(q, psd::default_tol(q)) {
        return Err(PsdError::NotPsd(q.min_eigenvalue()).into());
    }
    let jump = |m: &DiscreteMeasure| -> f64 {
        m.atoms()
            .iter()
            .map(|a| a.mass * dot(&a.point, &q.apply(&a.point)))
            .sum()
    };
    let lhs = psd::trace_inner(q, h)? + jump(nu);
    let rhs = psd::trace_inner(q, hstar)? + jump(nustar);
    Ok(lhs <= rhs + 1e-10)
}
