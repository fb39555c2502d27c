use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::measures::{dot, norm2};
use crate::psd::SymMatrix;

/// A convex test function `R^d -> R`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFn {
    /// `sign * x_i`.
    Linear {
        coord: usize,
        sign: f64,
    },
    /// `max(0, sign * x_i - c)`.
    Hinge {
        coord: usize,
        sign: f64,
        c: f64,
    },
    /// `max(0, <u, x> - c)`.
    DirHinge {
        u: Vec<f64>,
        c: f64,
    },
    Norm,
    NormSq,
    /// `exp(rate |x|)` up to `|x| = log_cap / rate`, continued along its
    /// tangent line beyond, so it stays convex with linear growth.
    ExpTangent {
        rate: f64,
        log_cap: f64,
    },
    /// `x^T Q x` with `Q` positive semidefinite.
    Quadratic(SymMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub kind: TestFn,
}

impl TestFunction {
    fn new(name: impl Into<String>, kind: TestFn) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TestFn::Linear { coord, sign } => sign * x[*coord],
            TestFn::Hinge { coord, sign, c } => (sign * x[*coord] - c).max(0.0),
            TestFn::DirHinge { u, c } => (dot(u, x) - c).max(0.0),
            TestFn::Norm => norm2(x),
            TestFn::NormSq => dot(x, x),
            TestFn::ExpTangent { rate, log_cap } => {
                let t = rate * norm2(x);
                if t <= *log_cap {
                    t.exp()
                } else {
                    log_cap.exp() * (1.0 + t - log_cap)
                }
            }
            TestFn::Quadratic(q) => q.quadratic_form(x),
        }
    }

    /// Convex with nonnegative mixed second derivatives (in the
    /// distributional sense), so each partial derivative is nondecreasing
    /// in every coordinate. In one dimension this is every convex function.
    pub fn is_directionally_convex(&self, d: usize) -> bool {
        if d <= 1 {
            return true;
        }
        match &self.kind {
            TestFn::Linear { .. } | TestFn::Hinge { .. } | TestFn::NormSq => true,
            TestFn::DirHinge { u, .. } => {
                u.iter().all(|v| *v >= 0.0) || u.iter().all(|v| *v <= 0.0)
            }
            TestFn::Norm | TestFn::ExpTangent { .. } => false,
            TestFn::Quadratic(q) => (0..d).all(|i| (0..d).all(|j| i == j || q.get(i, j) >= 0.0)),
        }
    }

    /// Componentwise nondecreasing on all of `R^d`.
    pub fn is_nondecreasing(&self) -> bool {
        match &self.kind {
            TestFn::Linear { sign, .. } | TestFn::Hinge { sign, .. } => *sign > 0.0,
            TestFn::DirHinge { u, .. } => u.iter().all(|v| *v >= 0.0),
            TestFn::Norm | TestFn::NormSq | TestFn::ExpTangent { .. } | TestFn::Quadratic(_) => {
                false
            }
        }
    }
}

/// Convex test functions for `R^d` at length scale `scale`: coordinate
/// hinges and linear maps, norms, random-direction hinges, a tangent-capped
/// exponential of the norm and random positive semidefinite quadratics.
/// Deterministic in `(d, scale)`.
pub fn convex_battery(d: usize, scale: f64) -> Vec<TestFunction> {
    let scale = if scale > 0.0 && scale.is_finite() {
        scale
    } else {
        1.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xba77e27 + d as u64);
    let mut gauss =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut out = Vec::new();
    for i in 0..d {
        for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
            out.push(TestFunction::new(
                format!("{tag}x{i}"),
                TestFn::Linear { coord: i, sign },
            ));
            for (c, ctag) in [(0.0, "0"), (scale, "s")] {
                out.push(TestFunction::new(
                    format!("hinge({tag}x{i}-{ctag})"),
                    TestFn::Hinge { coord: i, sign, c },
                ));
            }
        }
    }
    out.push(TestFunction::new("norm", TestFn::Norm));
    out.push(TestFunction::new("norm_sq", TestFn::NormSq));
    for k in 0..6 {
        let g = gauss(d);
        let r = norm2(&g).max(1e-12);
        // Half of the directions are folded into the nonnegative orthant.
        let u: Vec<f64> = g
            .iter()
            .map(|v| if k % 2 == 0 { v / r } else { v.abs() / r })
            .collect();
        let c = if k < 3 { 0.0 } else { 0.5 * scale };
        out.push(TestFunction::new(
            format!("dir_hinge{k}"),
            TestFn::DirHinge { u, c },
        ));
    }
    out.push(TestFunction::new(
        "exp_tangent",
        TestFn::ExpTangent {
            rate: 1.0 / scale,
            log_cap: 4.0,
        },
    ));
    for k in 0..3 {
        // The last quadratic has entrywise nonnegative Q.
        let b: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                gauss(d)
                    .into_iter()
                    .map(|v| if k == 2 { v.abs() } else { v })
                    .collect()
            })
            .collect();
        let q = SymMatrix::gram_rows(&b).scale(1.0 / (d as f64 * scale * scale));
        out.push(TestFunction::new(format!("quad{k}"), TestFn::Quadratic(q)));
    }
    out
}

/// The nondecreasing members of [`convex_battery`].
pub fn nondecreasing_battery(d: usize, scale: f64) -> Vec<TestFunction> {
    convex_battery(d, scale)
        .into_iter()
        .filter(TestFunction::is_nondecreasing)
        .collect()
}

/// The directionally convex members of [`convex_battery`].
pub fn directionally_convex_battery(d: usize, scale: f64) -> Vec<TestFunction> {
    convex_battery(d, scale)
        .into_iter()
        .filter(|f| f.is_directionally_convex(d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn contains_norm_squared() {
        assert!(convex_battery(2, 1.0)
            .iter()
            .any(|f| f.kind == TestFn::NormSq));
    }

    #[test]
    fn midpoint_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            for f in convex_battery(d, 1.5) {
                for _ in 0..200 {
                    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-8.0..8.0)).collect();
                    let y: Vec<f64> = (0..d).map(|_| rng.random_range(-8.0..8.0)).collect();
                    let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                    let lhs = f.eval(&m);
                    let rhs = 0.5 * (f.eval(&x) + f.eval(&y));
                    assert!(
                        lhs <= rhs + 1e-9 * (1.0 + rhs.abs()),
                        "{} at {x:?} {y:?}",
                        f.name
                    );
                }
            }
        }
    }

    #[test]
    fn nondecreasing_members_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=3 {
            let fs = nondecreasing_battery(d, 1.0);
            assert!(!fs.is_empty());
            for f in fs {
                for _ in 0..200 {
                    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(0.0..2.0)).collect();
                    assert!(f.eval(&x) <= f.eval(&y) + 1e-12, "{}", f.name);
                }
            }
        }
    }

    // f(x + s e_i + t e_j) - f(x + s e_i) - f(x + t e_j) + f(x) >= 0 for s, t >= 0.
    #[test]
    fn directional_members_are_supermodular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 2..=3 {
            let fs = directionally_convex_battery(d, 1.0);
            assert!(fs.len() > 10);
            for f in fs {
                for _ in 0..300 {
                    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let (i, j) = (rng.random_range(0..d), rng.random_range(0..d));
                    if i == j {
                        continue;
                    }
                    let (s, t) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
                    let mut xs = x.clone();
                    xs[i] += s;
                    let mut xt = x.clone();
                    xt[j] += t;
                    let mut xst = xs.clone();
                    xst[j] += t;
                    let v = f.eval(&xst) - f.eval(&xs) - f.eval(&xt) + f.eval(&x);
                    assert!(v >= -1e-9, "{}: {v}", f.name);
                }
            }
        }
    }
}
