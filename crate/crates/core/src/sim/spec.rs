use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::order::OrderRelation;

/// Row-major `rows x cols` matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Piecewise-constant integrands on a time grid `0 = t_0 < ... < t_m = T`:
/// on interval `k` the terminal value gains `A_k dW + J_k (dZ - lambda_k dt)`
/// with `W` a standard Brownian motion and `Z` independent Poisson counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    /// `[interval][d][n]`.
    #[serde(rename = "A")]
    pub a: Vec<Matrix>,
    /// `[interval][d][n_jumps]`; empty for a pure diffusion.
    #[serde(rename = "J", default)]
    pub j: Vec<Matrix>,
    /// `[interval][n_jumps]`, events per unit time.
    #[serde(default)]
    pub lambda: Vec<Vec<f64>>,
}

/// Poisson random measure with finitely many marks `x_i` of rate `sigma_i`.
/// Jump sizes default to the marks themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonMeasureSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Matrix>,
    pub marks: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// `[interval][d][mark]` jump values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<Matrix>>,
}

fn check_grid(grid: &[f64]) -> Result<(), SimError> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(SimError::BadSpec(
            "grid must start at 0 and have an interval".into(),
        ));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::BadSpec(
            "grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn check_matrix(
    m: &Matrix,
    rows: usize,
    cols: Option<usize>,
    what: &str,
) -> Result<usize, SimError> {
    if m.len() != rows {
        return Err(SimError::BadSpec(format!(
            "{what} has {} rows, expected {rows}",
            m.len()
        )));
    }
    let c = cols.unwrap_or_else(|| m.first().map_or(0, Vec::len));
    if m.iter().any(|r| r.len() != c) {
        return Err(SimError::BadSpec(format!(
            "{what} rows have unequal lengths"
        )));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SimError::BadSpec(format!("{what} has a non-finite entry")));
    }
    Ok(c)
}

impl StrategySpec {
    pub fn intervals(&self) -> usize {
        self.grid.len().saturating_sub(1)
    }

    pub fn dimension(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        self.grid.last().copied().unwrap_or(0.0)
    }

    pub fn has_jumps(&self) -> bool {
        !self.j.is_empty()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_grid(&self.grid)?;
        let m = self.intervals();
        let d = self.dimension();
        if d == 0 {
            return Err(SimError::BadSpec("A must have at least one row".into()));
        }
        if self.a.len() != m {
            return Err(SimError::BadSpec(format!(
                "A has {} intervals, grid has {m}",
                self.a.len()
            )));
        }
        let n = self.a[0].first().map_or(0, Vec::len);
        for a in &self.a {
            check_matrix(a, d, Some(n), "A")?;
        }
        if self.j.is_empty() {
            if self.lambda.iter().any(|l| !l.is_empty()) {
                return Err(SimError::BadSpec("lambda given without J".into()));
            }
            return Ok(());
        }
        if self.j.len() != m || self.lambda.len() != m {
            return Err(SimError::BadSpec(
                "J and lambda need one entry per interval".into(),
            ));
        }
        for (j, l) in self.j.iter().zip(&self.lambda) {
            check_matrix(j, d, Some(l.len()), "J")?;
            if l.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(SimError::BadSpec(
                    "intensities must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same integrands on a finer grid with the same horizon.
    pub fn refine(&self, grid: &[f64]) -> Result<Self, SimError> {
        check_grid(grid)?;
        if (grid[grid.len() - 1] - self.horizon()).abs() > 1e-12 * (1.0 + self.horizon()) {
            return Err(SimError::GridMismatch(format!(
                "horizons {} and {} differ",
                self.horizon(),
                grid[grid.len() - 1]
            )));
        }
        let src = |w: &[f64]| {
            let mid = 0.5 * (w[0] + w[1]);
            self.grid
                .windows(2)
                .position(|s| mid < s[1])
                .unwrap_or(self.intervals() - 1)
        };
        let idx: Vec<usize> = grid.windows(2).map(src).collect();
        Ok(Self {
            grid: grid.to_vec(),
            a: idx.iter().map(|&k| self.a[k].clone()).collect(),
            j: if self.has_jumps() {
                idx.iter().map(|&k| self.j[k].clone()).collect()
            } else {
                Vec::new()
            },
            lambda: if self.has_jumps() {
                idx.iter().map(|&k| self.lambda[k].clone()).collect()
            } else {
                Vec::new()
            },
        })
    }

    /// `sum_j lambda_j delta_{J[:, j]}` on interval `k`.
    pub fn jump_measure(&self, k: usize) -> Result<crate::measures::DiscreteMeasure, SimError> {
        let d = self.dimension();
        let pairs: Vec<(Vec<f64>, f64)> = if self.has_jumps() {
            self.lambda[k]
                .iter()
                .enumerate()
                .map(|(c, l)| ((0..d).map(|r| self.j[k][r][c]).collect(), *l))
                .collect()
        } else {
            Vec::new()
        };
        crate::measures::DiscreteMeasure::from_pairs(d, pairs)
            .map_err(|e| SimError::BadSpec(e.to_string()))
    }
}

impl PoissonMeasureSpec {
    pub fn to_strategy(&self) -> Result<StrategySpec, SimError> {
        check_grid(&self.grid)?;
        let m = self.grid.len() - 1;
        let d = self.a.first().map_or(0, Vec::len);
        if self.marks.len() != self.sigma.len() {
            return Err(SimError::BadSpec("marks and sigma differ in length".into()));
        }
        let j = match &self.jumps {
            Some(j) => j.clone(),
            None => {
                if self.marks.iter().any(|x| x.len() != d) {
                    return Err(SimError::BadSpec(
                        "marks must have dimension d when no jump map is given".into(),
                    ));
                }
                let jm: Matrix = (0..d)
                    .map(|r| self.marks.iter().map(|x| x[r]).collect())
                    .collect();
                vec![jm; m]
            }
        };
        let s = StrategySpec {
            grid: self.grid.clone(),
            a: self.a.clone(),
            j,
            lambda: vec![self.sigma.clone(); m],
        };
        s.validate()?;
        Ok(s)
    }
}

/// One side of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideSpec {
    Measure(PoissonMeasureSpec),
    Strategy(StrategySpec),
}

impl SideSpec {
    fn with_grid(&self, grid: &[f64]) -> Result<StrategySpec, SimError> {
        match self {
            SideSpec::Measure(p) => PoissonMeasureSpec {
                grid: grid.to_vec(),
                ..p.clone()
            }
            .to_strategy(),
            SideSpec::Strategy(s) => {
                let s = StrategySpec {
                    grid: grid.to_vec(),
                    ..s.clone()
                };
                s.validate()?;
                Ok(s)
            }
        }
    }
}

/// A pair of terminal variables `F`, `G` sharing a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub horizon: f64,
    pub grid: Vec<f64>,
    #[serde(rename = "F")]
    pub f: SideSpec,
    #[serde(rename = "G")]
    pub g: SideSpec,
    pub relation: OrderRelation,
}

impl Scenario {
    pub fn specs(&self) -> Result<(StrategySpec, StrategySpec), SimError> {
        check_grid(&self.grid)?;
        if (self.grid[self.grid.len() - 1] - self.horizon).abs() > 1e-12 * (1.0 + self.horizon) {
            return Err(SimError::BadSpec("grid must end at the horizon".into()));
        }
        let f = self.f.with_grid(&self.grid)?;
        let g = self.g.with_grid(&self.grid)?;
        if f.dimension() != g.dimension() {
            return Err(SimError::BadSpec(format!(
                "F has dimension {}, G has {}",
                f.dimension(),
                g.dimension()
            )));
        }
        Ok((f, g))
    }
}

/// Seed for an independent role (`F` drivers, `G` drivers, ...) under a
/// user seed.
pub fn derive_seed(seed: u64, role: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role.wrapping_add(1 << 32));
    rng.next_u64()
}

/// `n_paths` independent draws of the terminal value, one row per path.
/// Path `i` uses stream `i` of a ChaCha generator keyed by `seed`, so the
/// output does not depend on the thread count.
pub fn simulate_terminal(
    spec: &StrategySpec,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    spec.validate()?;
    let d = spec.dimension();
    let dts: Vec<f64> = spec.grid.windows(2).map(|w| w[1] - w[0]).collect();
    let poisson: Vec<Vec<Option<Poisson<f64>>>> = if spec.has_jumps() {
        spec.lambda
            .iter()
            .zip(&dts)
            .map(|(l, dt)| l.iter().map(|r| Poisson::new(r * dt).ok()).collect())
            .collect()
    } else {
        Vec::new()
    };
    let path = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut x = vec![0.0; d];
        for (k, dt) in dts.iter().enumerate() {
            let sd = dt.sqrt();
            let n = spec.a[k][0].len();
            for c in 0..n {
                let z: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                for (xr, row) in x.iter_mut().zip(&spec.a[k]) {
                    *xr += row[c] * z;
                }
            }
            if let Some(dists) = poisson.get(k) {
                for (c, dist) in dists.iter().enumerate() {
                    let Some(dist) = dist else { continue };
                    let comp = spec.lambda[k][c] * dt;
                    let inc = dist.sample(&mut rng) - comp;
                    for (xr, row) in x.iter_mut().zip(&spec.j[k]) {
                        *xr += row[c] * inc;
                    }
                }
            }
        }
        x
    };
    Ok((0..n_paths).into_par_iter().map(path).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(a: f64, j: f64, lambda: f64) -> StrategySpec {
        StrategySpec {
            grid: vec![0.0, 1.0],
            a: vec![vec![vec![a]]],
            j: vec![vec![vec![j]]],
            lambda: vec![vec![lambda]],
        }
    }

    fn variance(s: &[Vec<f64>]) -> f64 {
        let n = s.len() as f64;
        let m = s.iter().map(|x| x[0]).sum::<f64>() / n;
        s.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn zero_spec_gives_zero() {
        let s = simulate_terminal(&one_d(0.0, 1.0, 0.0), 100, 1).unwrap();
        assert!(s.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn unit_variances() {
        let n = 40_000;
        let tol = 3.0 * (2.0 / n as f64).sqrt();
        let bm = simulate_terminal(&one_d(1.0, 0.0, 0.0), n, 7).unwrap();
        assert!((variance(&bm) - 1.0).abs() < tol);
        let pois = simulate_terminal(&one_d(0.0, 1.0, 1.0), n, 7).unwrap();
        // Excess kurtosis of Poisson(1) widens the spread of the sample variance.
        assert!((variance(&pois) - 1.0).abs() < 2.0 * tol);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = one_d(0.7, 1.3, 2.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_terminal(&spec, 2000, 99).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn refine_preserves_coefficients() {
        let mut s = one_d(1.0, 2.0, 3.0);
        s.grid = vec![0.0, 0.5, 1.0];
        s.a.push(vec![vec![4.0]]);
        s.j.push(vec![vec![5.0]]);
        s.lambda.push(vec![6.0]);
        let r = s.refine(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(
            r.a.iter().map(|m| m[0][0]).collect::<Vec<_>>(),
            vec![1.0, 1.0, 4.0, 4.0]
        );
        assert_eq!(
            r.lambda.iter().map(|l| l[0]).collect::<Vec<_>>(),
            vec![3.0, 3.0, 6.0, 6.0]
        );
        assert!(matches!(
            s.refine(&[0.0, 2.0]),
            Err(SimError::GridMismatch(_))
        ));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = one_d(1.0, 1.0, -1.0);
        assert!(s.validate().is_err());
        s.lambda = vec![vec![1.0]];
        s.grid = vec![0.0, 0.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenario_round_trip() {
        let json = r#"{
            "horizon": 1.0, "grid": [0.0, 1.0], "relation": "cxp",
            "F": {"A": [[[0.5]]], "J": [[[1.0]]], "lambda": [[1.0]]},
            "G": {"A": [[[1.0]]], "marks": [[1.0], [2.0]], "sigma": [1.0, 0.5]}
        }"#;
        let sc: Scenario = serde_json::from_str(json).unwrap();
        let (f, g) = sc.specs().unwrap();
        assert_eq!(f.lambda, vec![vec![1.0]]);
        assert_eq!(g.j, vec![vec![vec![1.0, 2.0]]]);
        assert_eq!(g.lambda, vec![vec![1.0, 0.5]]);
        let again: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(again, sc);
    }
}
