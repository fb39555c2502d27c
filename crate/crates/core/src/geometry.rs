//! Thresholds along directions, the convex sets `C_x` and `C_E`, support
//! hulls and witness simplices.
//!
//! For a direction `u`, the threshold `a_{x,u}` is the first `b >= <u, x>` at
//! which the survival functions of the two projected measures agree. `C_x`
//! is the intersection of the half-spaces `<u, y> <= a_{x,u}`.
//!
//! In the plane the default direction set is exact: it contains every normal
//! of a difference of two relevant points, so the order of the projected
//! atoms is constant on each open arc between consecutive directions and the
//! intersection over the arc is already attained at its endpoints. In higher
//! dimensions the sets are outer approximations built from a quasi-uniform
//! sample of the sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, Feasibility, LinearProgram, LpError, Relation};
use crate::measures::{check_unit, dot, max_norm_dist, norm2, DiscreteMeasure, MeasureError};

/// Number of sphere directions used in dimension three and above.
pub const DEFAULT_SPHERE_DIRECTIONS: usize = 2048;

/// Tolerance for the witness identity `sum a_i y_i = x`.
pub const WITNESS_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("measures are not ordered along direction {direction:?} (gap {gap:e} at {at})")]
    NotOrderedOnLine {
        direction: Vec<f64>,
        at: f64,
        gap: f64,
    },
    #[error("point {0:?} is not an excess point of the pair")]
    NotExcessPoint(Vec<f64>),
    #[error("subset is empty")]
    EmptySubset,
    #[error("no witness simplex found: {0}")]
    NoWitness(String),
    #[error("point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// The region `<normal, y> <= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn violation(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.offset
    }
}

/// Intersection of half-spaces. Vertices are filled in for `d <= 2`
/// (counterclockwise in the plane) and left empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub halfspaces: Vec<HalfSpace>,
    #[serde(default)]
    pub vertices: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn from_halfspaces(dimension: usize, halfspaces: Vec<HalfSpace>) -> Self {
        let vertices = match dimension {
            1 => interval_vertices(&halfspaces),
            2 => planar_vertices(&halfspaces),
            _ => Vec::new(),
        };
        Self {
            halfspaces,
            vertices,
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        contains(self, y, tol)
    }

    /// Largest violation of any half-space by `y` (nonpositive inside).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.violation(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `true` iff `y` satisfies every half-space of `p` within `tol`.
pub fn contains(p: &Polytope, y: &[f64], tol: f64) -> bool {
    p.halfspaces.iter().all(|h| h.violation(y) <= tol)
}

/// A convex combination of target atoms reproducing a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSimplex {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WitnessSimplex {
    /// Max-norm error of `sum a_i y_i - x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut r: Vec<f64> = x.iter().map(|v| -v).collect();
        for (y, a) in self.points.iter().zip(&self.weights) {
            for (rk, yk) in r.iter_mut().zip(y) {
                *rk += a * yk;
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks weights, the barycenter identity and `2 <= k <= d + 1`.
    pub fn is_valid(&self, x: &[f64]) -> bool {
        let k = self.points.len();
        let sum: f64 = self.weights.iter().sum();
        (2..=x.len() + 1).contains(&k)
            && self.weights.iter().all(|a| *a >= 0.0)
            && (sum - 1.0).abs() <= WITNESS_TOL
            && self.residual(x) <= WITNESS_TOL
    }
}

/// Which directions `u` to intersect over.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DirectionSet {
    /// Exact critical directions for `d <= 2`, a sphere sample of
    /// [`DEFAULT_SPHERE_DIRECTIONS`] otherwise.
    #[default]
    Auto,
    /// `n` evenly spread directions (plus the coordinate axes).
    Count(usize),
}

/// Direction set for a configuration of points. Always contains `+-e_k`.
pub fn directions(dimension: usize, points: &[&[f64]], set: &DirectionSet) -> Vec<Vec<f64>> {
    let mut dirs = match (dimension, set) {
        (1, _) => vec![vec![1.0], vec![-1.0]],
        (2, DirectionSet::Auto) => critical_angles(points)
            .into_iter()
            .map(|t| vec![t.cos(), t.sin()])
            .collect(),
        (2, DirectionSet::Count(n)) => (0..*n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / *n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        (d, DirectionSet::Auto) => sphere_sample(d, DEFAULT_SPHERE_DIRECTIONS),
        (d, DirectionSet::Count(n)) => sphere_sample(d, *n),
    };
    if dimension > 1 {
        for k in 0..dimension {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dimension];
                e[k] = s;
                dirs.push(e);
            }
        }
    }
    dirs
}

fn critical_angles(points: &[&[f64]]) -> Vec<f64> {
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    let mut angles = vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            if dx.abs().max(dy.abs()) <= 1e-12 {
                continue;
            }
            let t = dy.atan2(dx) + FRAC_PI_2;
            angles.push(t.rem_euclid(TAU));
            angles.push((t + PI).rem_euclid(TAU));
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let n = angles.len();
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let next = if k + 1 < n {
            angles[k + 1]
        } else {
            angles[0] + TAU
        };
        out.push(angles[k]);
        out.push(0.5 * (angles[k] + next));
    }
    out
}

fn sphere_sample(dimension: usize, n: usize) -> Vec<Vec<f64>> {
    if dimension == 3 {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        return (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1ec);
    (0..n)
        .map(|_| loop {
            let g: Vec<f64> = (0..dimension)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let r = norm2(&g);
            if r > 1e-9 {
                break g.into_iter().map(|v| v / r).collect();
            }
        })
        .collect()
}

/// First `b >= <u, x>` where the survival functions of `mu` and `nu` along
/// `u` coincide.
pub fn threshold(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    x: &[f64],
    u: &[f64],
) -> Result<f64, GeometryError> {
    check_dims(mu, nu, x)?;
    check_unit(u, mu.dimension())?;
    let pm = mu.project(u)?;
    let pn = nu.project(u)?;
    let b0 = dot(u, x);
    let psi = |b: f64| pn.survival(b) - pm.survival(b);

    let mut grid: Vec<f64> = pm
        .breakpoints
        .iter()
        .chain(&pn.breakpoints)
        .copied()
        .filter(|t| *t > b0)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let scale = grid.iter().fold(b0.abs(), |m, t| m.max(t.abs()));
    let eq_tol = 1e-10 * (1.0 + scale);
    let neg_tol = 1e-9 * (1.0 + scale);

    let values: Vec<(f64, f64)> = std::iter::once(b0)
        .chain(grid.iter().copied())
        .map(|b| (b, psi(b)))
        .collect();
    if let Some(&(at, gap)) = values.iter().find(|(_, v)| *v < -neg_tol) {
        return Err(GeometryError::NotOrderedOnLine {
            direction: u.to_vec(),
            at,
            gap,
        });
    }
    let mut prev: Option<(f64, f64)> = None;
    for &(b, v) in &values {
        if v.abs() <= eq_tol {
            return Ok(b);
        }
        if v < 0.0 {
            // A small negative value: interpolate on the bracketing segment.
            if let Some((pb, pv)) = prev {
                return Ok(pb + (b - pb) * pv / (pv - v));
            }
            return Ok(b);
        }
        prev = Some((b, v));
    }
    // Past the last breakpoint both survival functions vanish.
    Ok(values.last().map_or(b0, |(b, _)| *b))
}

/// Intersection of `<u, y> <= threshold(mu, nu, x, u)` over a direction set.
pub fn cx_set(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    x: &[f64],
    set: &DirectionSet,
) -> Result<Polytope, GeometryError> {
    cx_set_subset_unchecked(mu, nu, &[x.to_vec()], set)
}

/// `C_E`: per direction the largest threshold over the points of `E`. Every
/// point of `E` must carry more `mu` mass than `nu` mass.
pub fn cx_set_subset(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    e: &[Vec<f64>],
    set: &DirectionSet,
) -> Result<Polytope, GeometryError> {
    if e.is_empty() {
        return Err(GeometryError::EmptySubset);
    }
    for x in e {
        check_dims(mu, nu, x)?;
        if mu.mass_at(x) <= nu.mass_at(x) {
            return Err(GeometryError::NotExcessPoint(x.clone()));
        }
    }
    cx_set_subset_unchecked(mu, nu, e, set)
}

fn cx_set_subset_unchecked(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    e: &[Vec<f64>],
    set: &DirectionSet,
) -> Result<Polytope, GeometryError> {
    let d = mu.dimension();
    for x in e {
        check_dims(mu, nu, x)?;
    }
    let pts: Vec<&[f64]> = mu
        .points()
        .chain(nu.points())
        .chain(e.iter().map(|x| x.as_slice()))
        .collect();
    let dirs = directions(d, &pts, set);
    let halfspaces = dirs
        .into_par_iter()
        .map(|u| {
            let mut offset = f64::NEG_INFINITY;
            for x in e {
                offset = offset.max(threshold(mu, nu, x, &u)?);
            }
            Ok(HalfSpace { normal: u, offset })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(Polytope::from_halfspaces(d, halfspaces))
}

/// Convex hull of the support of `nu`.
pub fn support_hull(nu: &DiscreteMeasure) -> Polytope {
    support_hull_with(nu, &DirectionSet::Auto)
}

pub fn support_hull_with(nu: &DiscreteMeasure, set: &DirectionSet) -> Polytope {
    let d = nu.dimension();
    let pts: Vec<&[f64]> = nu.points().collect();
    let halfspaces = directions(d, &pts, set)
        .into_iter()
        .map(|u| {
            let offset = pts
                .iter()
                .map(|p| dot(&u, p))
                .fold(f64::NEG_INFINITY, f64::max);
            HalfSpace { normal: u, offset }
        })
        .collect();
    let vertices = match d {
        1 => {
            let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            dedup_points(vec![vec![lo], vec![hi]])
        }
        2 => convex_hull_2d(&pts.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>())
            .into_iter()
            .map(|p| p.to_vec())
            .collect(),
        _ => Vec::new(),
    };
    Polytope {
        halfspaces,
        vertices,
    }
}

/// Finds atoms `y_1..y_k` of `nu` inside `C_x`, distinct from `x`, with
/// `x = sum a_i y_i`. The weights come from a basic solution of the
/// membership program, so `k <= d + 1`.
pub fn find_witness(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    x: &[f64],
) -> Result<WitnessSimplex, GeometryError> {
    check_dims(mu, nu, x)?;
    if mu.mass_at(x) <= nu.mass_at(x) {
        return Err(GeometryError::NotExcessPoint(x.to_vec()));
    }
    let cx = cx_set(mu, nu, x, &DirectionSet::Auto)?;
    let scale = nu
        .points()
        .chain([x])
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale);
    let candidates: Vec<&[f64]> = nu
        .points()
        .filter(|y| max_norm_dist(y, x) > 1e-12 && cx.contains(y, tol))
        .collect();
    let weights = convex_weights(&candidates, x)?
        .ok_or_else(|| GeometryError::NoWitness("x is not in the hull of the candidates".into()))?;
    let mut points = Vec::new();
    let mut kept = Vec::new();
    for (y, a) in candidates.iter().zip(&weights) {
        if *a > 1e-12 {
            points.push(y.to_vec());
            kept.push(*a);
        }
    }
    let sum: f64 = kept.iter().sum();
    kept.iter_mut().for_each(|a| *a /= sum);
    let w = WitnessSimplex {
        points,
        weights: kept,
    };
    if !w.is_valid(x) {
        return Err(GeometryError::NoWitness(format!(
            "candidate simplex fails re-validation (residual {:e}, k = {})",
            w.residual(x),
            w.points.len()
        )));
    }
    Ok(w)
}

/// Basic feasible weights `a >= 0`, `sum a = 1`, `sum a_k p_k = x`, or `None`.
pub(crate) fn convex_weights(points: &[&[f64]], x: &[f64]) -> Result<Option<Vec<f64>>, LpError> {
    if points.is_empty() {
        return Ok(None);
    }
    let n = points.len();
    let mut prog = LinearProgram::feasibility(n);
    prog.add_constraint(vec![1.0; n], Relation::Eq, 1.0);
    for (k, xk) in x.iter().enumerate() {
        prog.add_constraint(points.iter().map(|p| p[k]).collect(), Relation::Eq, *xk);
    }
    Ok(match lp::check_feasible(&prog)? {
        Feasibility::Feasible(a) => Some(a),
        Feasibility::Infeasible(_) => None,
    })
}

/// Hausdorff distance between two finite point sets (max norm).
pub fn vertex_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one_way = |s: &[Vec<f64>], t: &[Vec<f64>]| {
        s.iter()
            .map(|p| {
                t.iter()
                    .map(|q| max_norm_dist(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() {
            0.0
        } else {
            f64::INFINITY
        };
    }
    one_way(a, b).max(one_way(b, a))
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure, x: &[f64]) -> Result<(), GeometryError> {
    let d = mu.dimension();
    for found in [nu.dimension(), x.len()] {
        if found != d {
            return Err(GeometryError::DimensionMismatch { expected: d, found });
        }
    }
    Ok(())
}

fn interval_vertices(hs: &[HalfSpace]) -> Vec<Vec<f64>> {
    let mut hi = f64::INFINITY;
    let mut lo = f64::NEG_INFINITY;
    for h in hs {
        if h.normal[0] > 0.0 {
            hi = hi.min(h.offset / h.normal[0]);
        } else if h.normal[0] < 0.0 {
            lo = lo.max(h.offset / h.normal[0]);
        }
    }
    if lo > hi + 1e-9 {
        return Vec::new();
    }
    dedup_points(vec![vec![lo], vec![hi.max(lo)]])
}

fn planar_vertices(hs: &[HalfSpace]) -> Vec<Vec<f64>> {
    let r = 2.0 * (1.0 + hs.iter().fold(0.0_f64, |m, h| m.max(h.offset.abs())));
    let mut poly = vec![[-r, -r], [r, -r], [r, r], [-r, r]];
    for h in hs {
        poly = clip(&poly, h);
        if poly.is_empty() {
            return Vec::new();
        }
    }
    convex_hull_2d(&poly)
        .into_iter()
        .map(|p| p.to_vec())
        .collect()
}

// One Sutherland-Hodgman step.
fn clip(poly: &[[f64; 2]], h: &HalfSpace) -> Vec<[f64; 2]> {
    let tol = 1e-12 * (1.0 + h.offset.abs());
    let f = |p: &[f64; 2]| h.normal[0] * p[0] + h.normal[1] * p[1] - h.offset;
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let cur = poly[k];
        let prev = poly[(k + n - 1) % n];
        let (fc, fp) = (f(&cur), f(&prev));
        let cross = |fp: f64, fc: f64| {
            let t = fp / (fp - fc);
            [
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
            ]
        };
        match (fp <= tol, fc <= tol) {
            (true, true) => out.push(cur),
            (false, true) => {
                out.push(cross(fp, fc));
                out.push(cur);
            }
            (true, false) => out.push(cross(fp, fc)),
            (false, false) => {}
        }
    }
    out
}

/// Counterclockwise hull (Andrew's monotone chain) with collinear points and
/// near-duplicates (within `1e-9`) removed.
pub(crate) fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for p in points {
        if !pts
            .iter()
            .any(|q| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()) <= 1e-9)
        {
            pts.push(*p);
        }
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if pts.len() <= 2 {
        return pts;
    }
    let scale = pts
        .iter()
        .fold(1.0_f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let eps = 1e-12 * scale * scale;
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    hull
}

fn dedup_points(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        if !out.iter().any(|q| max_norm_dist(q, &p) <= 1e-9) {
            out.push(p);
        }
    }
    out
}
