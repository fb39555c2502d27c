use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Arithmetic the simplex engine needs. Floating point carries tolerances;
/// exact rationals compare with zero tolerance.
pub trait LpScalar: Clone + PartialOrd + Debug + Signed {
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Smallest tableau entry accepted as a pivot.
    fn pivot_tol() -> Self;
    /// Phase-one objective above which the program is declared infeasible.
    fn feas_tol() -> Self;
    /// Reduced-cost threshold for an improving column.
    fn opt_tol() -> Self;
}

impl LpScalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pivot_tol() -> Self {
        1e-10
    }
    fn feas_tol() -> Self {
        1e-9
    }
    fn opt_tol() -> Self {
        1e-10
    }
}

impl LpScalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite coefficient")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn pivot_tol() -> Self {
        Self::zero()
    }
    fn feas_tol() -> Self {
        Self::zero()
    }
    fn opt_tol() -> Self {
        Self::zero()
    }
}
