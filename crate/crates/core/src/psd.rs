//! Symmetric matrices and the positive-semidefinite (Loewner) order.
//!
//! Eigen-decompositions use cyclic Jacobi rotations: small dense matrices,
//! deterministic results, no linear-algebra dependency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entrywise asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("matrix data has {found} entries, expected {expected}")]
    BadShape { expected: usize, found: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
}

/// A symmetric `d x d` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = PsdError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

impl SymMatrix {
    /// Checks symmetry within [`SYMMETRY_TOL`] and then symmetrizes exactly.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, PsdError> {
        if data.len() != dim * dim {
            return Err(PsdError::BadShape {
                expected: dim * dim,
                found: data.len(),
            });
        }
        let mut worst = 0.0_f64;
        for i in 0..dim {
            for j in i + 1..dim {
                worst = worst.max((data[i * dim + j] - data[j * dim + i]).abs());
            }
        }
        if worst > SYMMETRY_TOL || worst.is_nan() {
            return Err(PsdError::NotSymmetric(worst));
        }
        let mut m = Self { dim, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PsdError> {
        let dim = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(PsdError::BadShape {
                expected: dim * dim,
                found: r.len() * dim,
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            m.data[i * dim + i] = *v;
        }
        m
    }

    /// Rank-one matrix `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let dim = v.len();
        let data = (0..dim * dim).map(|k| v[k / dim] * v[k % dim]).collect();
        Self { dim, data }
    }

    /// `A A^T` for a `d x n` matrix given by rows.
    pub fn gram_rows(a: &[Vec<f64>]) -> Self {
        let dim = a.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in i + 1..d {
                let v = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.dim.max(1))
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            let row: f64 = (0..d).map(|j| self.data[i * d + j] * x[j]).sum();
            s += x[i] * row;
        }
        s
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.data[i * d + j] * x[j]).sum())
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PsdError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self, PsdError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, PsdError> {
        if self.dim != other.dim {
            return Err(PsdError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Eigenvalues (ascending) and matching unit eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        jacobi_eigen(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0.first().copied().unwrap_or(0.0)
    }
}

/// Default tolerance `1e-9 * (1 + max|a_ij|)`.
pub fn default_tol(a: &SymMatrix) -> f64 {
    1e-9 * (1.0 + a.max_abs())
}

/// `true` iff every eigenvalue of `a` is at least `-tol`.
pub fn is_psd(a: &SymMatrix, tol: f64) -> bool {
    a.dim() == 0 || a.min_eigenvalue() >= -tol
}

/// Loewner order: `a <= b` iff `b - a` is positive semidefinite.
pub fn psd_leq(a: &SymMatrix, b: &SymMatrix) -> Result<bool, PsdError> {
    let diff = b.sub(a)?;
    let tol = 1e-9 * (1.0 + a.max_abs().max(b.max_abs()));
    Ok(is_psd(&diff, tol))
}

/// Frobenius inner product `Tr(A B^T) = sum a_ij b_ij`.
pub fn trace_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64, PsdError> {
    if a.dim != b.dim {
        return Err(PsdError::DimensionMismatch(a.dim, b.dim));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Symmetric square root through the eigen-decomposition. Eigenvalues in
/// `[-1e-10, 0)` are treated as zero.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix, PsdError> {
    let (values, vectors) = a.eigen();
    if let Some(&min) = values.first() {
        if min < -1e-10 {
            return Err(PsdError::NotPsd(min));
        }
    }
    let d = a.dim();
    let mut data = vec![0.0; d * d];
    for (lam, v) in values.iter().zip(&vectors) {
        let s = lam.max(0.0).sqrt();
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] += s * v[i] * v[j];
            }
        }
    }
    let mut m = SymMatrix { dim: d, data };
    m.symmetrize();
    Ok(m)
}

fn jacobi_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.dim;
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.max_abs();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| (a[i * n + i], (0..n).map(|k| v[k * n + i]).collect()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_psd_examples() {
        assert!(is_psd(&SymMatrix::identity(3), 1e-9));
        assert!(is_psd(&SymMatrix::diag(&[1.0, 0.0]), 1e-9));
        assert!(!is_psd(&SymMatrix::diag(&[1.0, -1.0]), 1e-9));
    }

    #[test]
    fn psd_leq_examples() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert!(psd_leq(&a, &a).unwrap());
        assert!(psd_leq(&SymMatrix::diag(&[1.0, 0.0]), &SymMatrix::identity(2)).unwrap());
        assert!(!psd_leq(&SymMatrix::diag(&[2.0, 0.0]), &SymMatrix::identity(2)).unwrap());
        assert_eq!(
            psd_leq(&SymMatrix::identity(2), &SymMatrix::identity(3)),
            Err(PsdError::DimensionMismatch(3, 2))
        );
    }

    #[test]
    fn trace_inner_examples() {
        let i3 = SymMatrix::identity(3);
        assert_eq!(trace_inner(&i3, &i3).unwrap(), 3.0);
        assert_eq!(trace_inner(&i3, &SymMatrix::zeros(3)).unwrap(), 0.0);
        assert_eq!(
            trace_inner(&SymMatrix::diag(&[1.0, 2.0]), &SymMatrix::diag(&[3.0, 4.0])).unwrap(),
            11.0
        );
    }

    #[test]
    fn sqrt_examples() {
        let close = |a: &SymMatrix, b: &SymMatrix| a.sub(b).unwrap().max_abs() < 1e-12;
        assert!(close(
            &sqrt_psd(&SymMatrix::identity(2)).unwrap(),
            &SymMatrix::identity(2)
        ));
        assert!(close(
            &sqrt_psd(&SymMatrix::identity(2).scale(4.0)).unwrap(),
            &SymMatrix::identity(2).scale(2.0)
        ));
        assert!(close(
            &sqrt_psd(&SymMatrix::diag(&[9.0, 1.0])).unwrap(),
            &SymMatrix::diag(&[3.0, 1.0])
        ));
        assert!(matches!(
            sqrt_psd(&SymMatrix::diag(&[1.0, -1.0])),
            Err(PsdError::NotPsd(_))
        ));
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]),
            Err(PsdError::NotSymmetric(_))
        ));
    }

    #[test]
    fn eigen_reconstructs() {
        let a = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.5],
            vec![-2.0, 0.5, 3.0],
        ])
        .unwrap();
        let (vals, vecs) = a.eigen();
        for (lam, v) in vals.iter().zip(&vecs) {
            let av = a.apply(v);
            for k in 0..3 {
                assert!((av[k] - lam * v[k]).abs() < 1e-12);
            }
        }
        assert!((vals.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
    }
}
