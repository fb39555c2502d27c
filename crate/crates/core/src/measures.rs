//! Finitely supported measures on `R^d`.
//!
//! A [`DiscreteMeasure`] is a list of weighted atoms. Construction merges atoms
//! whose points coincide (within [`DEDUP_TOL`] in the max norm) and drops
//! zero-mass atoms, so the atom list is exactly the support.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points closer than this in the max norm are the same atom.
pub const DEDUP_TOL: f64 = 1e-12;

/// Allowed deviation of a direction from unit length.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("atom {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("atom {index} has invalid mass {mass}")]
    BadMass { index: usize, mass: f64 },
    #[error("atom {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("direction has norm {norm}, expected 1")]
    BadDirection { norm: f64 },
    #[error("invalid rational literal {0:?}")]
    BadRational(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn new(point: Vec<f64>, mass: f64) -> Self {
        Self { point, mass }
    }
}

/// A finite, nonnegative combination of Dirac masses.
///
/// The JSON form is `{"dimension": d, "atoms": [{"point": [..], "mass": m}]}`;
/// an atom may give `"rational": "p/q"` instead of `"mass"`, in which case
/// the measure keeps exact masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct DiscreteMeasure {
    dimension: usize,
    atoms: Vec<Atom>,
    // Exact masses, present when the measure was built from rational literals.
    exact_masses: Option<Vec<BigRational>>,
}

impl DiscreteMeasure {
    /// Builds a measure, merging coincident points and dropping zero masses.
    ///
    /// Atom order follows first appearance, which fixes the row/column order
    /// of every coupling computed from the measure.
    pub fn new(dimension: usize, atoms: Vec<Atom>) -> Result<Self, MeasureError> {
        Self::build(dimension, atoms, None)
    }

    /// Builds a measure whose masses are exact rationals. The float masses are
    /// the nearest doubles; exact validation uses the rationals.
    pub fn with_exact_masses(
        dimension: usize,
        points: Vec<Vec<f64>>,
        masses: Vec<BigRational>,
    ) -> Result<Self, MeasureError> {
        let atoms = points
            .into_iter()
            .zip(masses.iter())
            .map(|(p, m)| Atom::new(p, rational_to_f64(m)))
            .collect();
        Self::build(dimension, atoms, Some(masses))
    }

    /// Unit-mass Dirac measure at `point`.
    pub fn dirac(point: Vec<f64>) -> Self {
        let dimension = point.len();
        Self::new(dimension, vec![Atom::new(point, 1.0)]).expect("valid Dirac measure")
    }

    /// The zero measure in dimension `d`.
    pub fn zero(dimension: usize) -> Self {
        Self {
            dimension,
            atoms: Vec::new(),
            exact_masses: None,
        }
    }

    /// Convenience constructor from `(point, mass)` pairs.
    pub fn from_pairs<P: Into<Vec<f64>>>(
        dimension: usize,
        pairs: impl IntoIterator<Item = (P, f64)>,
    ) -> Result<Self, MeasureError> {
        Self::new(
            dimension,
            pairs
                .into_iter()
                .map(|(p, m)| Atom::new(p.into(), m))
                .collect(),
        )
    }

    fn build(
        dimension: usize,
        atoms: Vec<Atom>,
        exact: Option<Vec<BigRational>>,
    ) -> Result<Self, MeasureError> {
        if dimension == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        let mut merged_exact: Vec<BigRational> = Vec::new();
        for (index, atom) in atoms.into_iter().enumerate() {
            if atom.point.len() != dimension {
                return Err(MeasureError::DimensionMismatch {
                    index,
                    expected: dimension,
                    found: atom.point.len(),
                });
            }
            if !atom.mass.is_finite() || atom.mass < 0.0 {
                return Err(MeasureError::BadMass {
                    index,
                    mass: atom.mass,
                });
            }
            if atom.point.iter().any(|c| !c.is_finite()) {
                return Err(MeasureError::NonFinitePoint { index });
            }
            let exact_mass = exact.as_ref().map(|e| e[index].clone());
            let is_zero = match &exact_mass {
                Some(q) => q.is_zero(),
                None => atom.mass == 0.0,
            };
            if is_zero {
                continue;
            }
            match merged
                .iter()
                .position(|m| max_norm_dist(&m.point, &atom.point) <= DEDUP_TOL)
            {
                Some(k) => {
                    merged[k].mass += atom.mass;
                    if let Some(q) = exact_mass {
                        merged_exact[k] += q;
                    }
                }
                None => {
                    merged.push(atom);
                    if let Some(q) = exact_mass {
                        merged_exact.push(q);
                    }
                }
            }
        }
        Ok(Self {
            dimension,
            atoms: merged,
            exact_masses: exact.map(|_| merged_exact),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.iter().map(|a| a.point.as_slice())
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    /// Exact mass of atom `i`: the stored rational, or the exact value of the
    /// double otherwise.
    pub fn exact_mass(&self, i: usize) -> BigRational {
        match &self.exact_masses {
            Some(e) => e[i].clone(),
            None => f64_to_rational(self.atoms[i].mass),
        }
    }

    pub fn has_exact_masses(&self) -> bool {
        self.exact_masses.is_some()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Mass-weighted mean of the atom points.
    pub fn barycenter(&self) -> Result<Vec<f64>, MeasureError> {
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(MeasureError::ZeroMass);
        }
        let mut b = vec![0.0; self.dimension];
        for a in &self.atoms {
            for (bk, pk) in b.iter_mut().zip(&a.point) {
                *bk += a.mass * pk;
            }
        }
        b.iter_mut().for_each(|bk| *bk /= total);
        Ok(b)
    }

    /// Mass carried by the atom at `point` (zero if `point` is not in the support).
    pub fn mass_at(&self, point: &[f64]) -> f64 {
        self.index_of(point).map_or(0.0, |i| self.atoms[i].mass)
    }

    pub fn index_of(&self, point: &[f64]) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| max_norm_dist(&a.point, point) <= DEDUP_TOL)
    }

    /// Image of the measure under `y -> <u, y>`.
    pub fn project(&self, u: &[f64]) -> Result<ProjectedMeasure, MeasureError> {
        check_unit(u, self.dimension)?;
        Ok(ProjectedMeasure::from_values(
            self.atoms.iter().map(|a| (dot(u, &a.point), a.mass)),
        ))
    }

    /// Survival (stop-loss) function along `u`: `sum mass * (<u, y> - a)^+`.
    pub fn survival(&self, u: &[f64], a: f64) -> f64 {
        self.atoms
            .iter()
            .map(|at| at.mass * (dot(u, &at.point) - a).max(0.0))
            .sum()
    }

    /// Scales every mass by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.point.clone(), a.mass * factor))
            .collect();
        Self::new(self.dimension, atoms).expect("scaling keeps a measure valid")
    }

    /// Sum of two measures of the same dimension.
    pub fn plus(&self, other: &Self) -> Result<Self, MeasureError> {
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        Self::new(self.dimension, atoms)
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dimension: usize,
    atoms: Vec<AtomFile>,
}

#[derive(Serialize, Deserialize)]
struct AtomFile {
    point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rational: Option<String>,
}

impl TryFrom<MeasureFile> for DiscreteMeasure {
    type Error = MeasureError;
    fn try_from(f: MeasureFile) -> Result<Self, Self::Error> {
        if f.atoms.iter().all(|a| a.rational.is_none()) {
            let atoms = f
                .atoms
                .into_iter()
                .enumerate()
                .map(|(index, a)| {
                    a.mass
                        .map(|m| Atom::new(a.point, m))
                        .ok_or(MeasureError::BadMass {
                            index,
                            mass: f64::NAN,
                        })
                })
                .collect::<Result<_, _>>()?;
            return Self::new(f.dimension, atoms);
        }
        let mut points = Vec::with_capacity(f.atoms.len());
        let mut masses = Vec::with_capacity(f.atoms.len());
        for (index, a) in f.atoms.into_iter().enumerate() {
            let q = match (&a.rational, a.mass) {
                (Some(r), _) => parse_rational(r)?,
                (None, Some(m)) if m.is_finite() => f64_to_rational(m),
                _ => {
                    return Err(MeasureError::BadMass {
                        index,
                        mass: a.mass.unwrap_or(f64::NAN),
                    })
                }
            };
            if q < BigRational::zero() {
                return Err(MeasureError::BadMass {
                    index,
                    mass: rational_to_f64(&q),
                });
            }
            points.push(a.point);
            masses.push(q);
        }
        Self::with_exact_masses(f.dimension, points, masses)
    }
}

impl From<DiscreteMeasure> for MeasureFile {
    fn from(m: DiscreteMeasure) -> Self {
        let exact = m.exact_masses.clone();
        let atoms = m
            .atoms
            .into_iter()
            .enumerate()
            .map(|(i, a)| AtomFile {
                point: a.point,
                mass: Some(a.mass),
                rational: exact.as_ref().map(|e| e[i].to_string()),
            })
            .collect();
        MeasureFile {
            dimension: m.dimension,
            atoms,
        }
    }
}

/// A one-dimensional atomic measure with strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMeasure {
    pub breakpoints: Vec<f64>,
    pub masses: Vec<f64>,
}

impl ProjectedMeasure {
    /// Sorts `(value, mass)` pairs and merges values within [`DEDUP_TOL`].
    pub fn from_values(values: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut pairs: Vec<(f64, f64)> = values.into_iter().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut masses: Vec<f64> = Vec::with_capacity(pairs.len());
        for (t, m) in pairs {
            match breakpoints.last() {
                Some(&last) if (t - last).abs() <= DEDUP_TOL => {
                    *masses.last_mut().unwrap() += m;
                }
                _ => {
                    breakpoints.push(t);
                    masses.push(m);
                }
            }
        }
        Self {
            breakpoints,
            masses,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn survival(&self, a: f64) -> f64 {
        self.breakpoints
            .iter()
            .zip(&self.masses)
            .map(|(t, m)| m * (t - a).max(0.0))
            .sum()
    }
}

pub(crate) fn check_unit(u: &[f64], dimension: usize) -> Result<(), MeasureError> {
    let norm = norm2(u);
    if u.len() != dimension || (norm - 1.0).abs() > UNIT_TOL {
        return Err(MeasureError::BadDirection { norm });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Exact rational value of a finite double.
pub fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"` or `"p"` into a rational.
pub fn parse_rational(s: &str) -> Result<BigRational, MeasureError> {
    let bad = || MeasureError::BadRational(s.to_string());
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::from_pairs(2, [(vec![-1.0, 0.0], 0.5), (vec![1.0, 0.0], 0.5)]).unwrap()
    }

    fn square() -> DiscreteMeasure {
        DiscreteMeasure::from_pairs(
            2,
            [
                (vec![-1.0, -1.0], 0.25),
                (vec![-1.0, 1.0], 0.25),
                (vec![1.0, -1.0], 0.25),
                (vec![1.0, 1.0], 0.25),
            ],
        )
        .unwrap()
    }

    #[test]
    fn total_mass_examples() {
        assert_eq!(DiscreteMeasure::zero(2).total_mass(), 0.0);
        assert_eq!(two_point().total_mass(), 1.0);
        assert_eq!(square().total_mass(), 1.0);
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(
            DiscreteMeasure::dirac(vec![3.0, 4.0]).barycenter().unwrap(),
            vec![3.0, 4.0]
        );
        assert_eq!(two_point().barycenter().unwrap(), vec![0.0, 0.0]);
        let mu = DiscreteMeasure::from_pairs(
            2,
            [(vec![0.5, 0.0], 1.0 / 3.0), (vec![-0.25, 0.0], 2.0 / 3.0)],
        )
        .unwrap();
        let b = mu.barycenter().unwrap();
        assert!(b[0].abs() < 1e-15 && b[1] == 0.0);
        assert_eq!(
            DiscreteMeasure::zero(2).barycenter(),
            Err(MeasureError::ZeroMass)
        );
    }

    #[test]
    fn project_examples() {
        let p = DiscreteMeasure::dirac(vec![0.0, 0.0])
            .project(&[1.0, 0.0])
            .unwrap();
        assert_eq!((p.breakpoints, p.masses), (vec![0.0], vec![1.0]));
        let p = square().project(&[1.0, 0.0]).unwrap();
        assert_eq!((p.breakpoints, p.masses), (vec![-1.0, 1.0], vec![0.5, 0.5]));
        let p = two_point().project(&[0.0, 1.0]).unwrap();
        assert_eq!((p.breakpoints, p.masses), (vec![0.0], vec![1.0]));
        assert!(matches!(
            two_point().project(&[1.0, 1.0]),
            Err(MeasureError::BadDirection { .. })
        ));
    }

    #[test]
    fn survival_examples() {
        assert_eq!(
            DiscreteMeasure::dirac(vec![0.0, 0.0]).survival(&[1.0, 0.0], 1.0),
            0.0
        );
        assert_eq!(two_point().survival(&[1.0, 0.0], -1.0), 1.0);
        assert_eq!(square().survival(&[0.0, 1.0], 0.0), 0.5);
    }

    #[test]
    fn construction_merges_and_drops() {
        let m = DiscreteMeasure::from_pairs(
            1,
            [
                (vec![1.0], 0.25),
                (vec![1.0 + 1e-13], 0.25),
                (vec![2.0], 0.0),
            ],
        )
        .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].mass, 0.5);
        assert!(matches!(
            DiscreteMeasure::from_pairs(1, [(vec![1.0], -0.1)]),
            Err(MeasureError::BadMass { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::from_pairs(2, [(vec![1.0], 0.1)]),
            Err(MeasureError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let m: DiscreteMeasure = serde_json::from_str(
            r#"{"dimension": 1, "atoms": [{"point": [0], "rational": "1/3"}, {"point": [1], "mass": 0.5}]}"#,
        )
        .unwrap();
        assert!(m.has_exact_masses());
        assert_eq!(m.exact_mass(0), parse_rational("1/3").unwrap());
        let back: DiscreteMeasure =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let plain: DiscreteMeasure =
            serde_json::from_str(r#"{"dimension": 2, "atoms": [{"point": [0, 1], "mass": 1}]}"#)
                .unwrap();
        assert!(!plain.has_exact_masses());
        assert!(serde_json::from_str::<DiscreteMeasure>(
            r#"{"dimension": 1, "atoms": [{"point": [0]}]}"#
        )
        .is_err());
    }

    #[test]
    fn exact_masses_are_merged() {
        let m = DiscreteMeasure::with_exact_masses(
            1,
            vec![vec![0.0], vec![0.0], vec![1.0]],
            vec![
                parse_rational("1/3").unwrap(),
                parse_rational("1/6").unwrap(),
                parse_rational("1/2").unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.exact_mass(0), parse_rational("1/2").unwrap());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
