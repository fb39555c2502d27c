//! Seeded random instances shared by the integration tests.
//!
//! Points are multiples of 1/16 and masses multiples of 1/64, so sums,
//! halvings and translations are exact in binary floating point and the
//! constructed ordered pairs are ordered exactly, not just up to rounding.

#![allow(dead_code)]

use convex_order::measures::DiscreteMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Independent,
    EqualMass,
    ConstructedCx,
    ConstructedCxp,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub family: Family,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

impl Instance {
    pub fn in_orthant(&self) -> bool {
        self.mu
            .points()
            .chain(self.nu.points())
            .all(|p| p.iter().all(|c| *c >= 0.0))
    }
}

fn grid_point(rng: &mut ChaCha8Rng, d: usize, half_width: i32) -> Vec<f64> {
    (0..d)
        .map(|_| rng.random_range(-half_width..=half_width) as f64 / 16.0)
        .collect()
}

fn grid_mass(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=64) as f64 / 64.0
}

fn measure(d: usize, pairs: Vec<(Vec<f64>, f64)>) -> DiscreteMeasure {
    DiscreteMeasure::from_pairs(d, pairs).expect("generated measure is valid")
}

fn independent(rng: &mut ChaCha8Rng, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let n_mu = rng.random_range(1..=6);
    let n_nu = rng.random_range(1..=6);
    let mu = (0..n_mu)
        .map(|_| (grid_point(rng, d, 32), grid_mass(rng)))
        .collect();
    let nu = (0..n_nu)
        .map(|_| (grid_point(rng, d, 32), grid_mass(rng)))
        .collect();
    (measure(d, mu), measure(d, nu))
}

/// `nu` masses partition the total mass of `mu` into multiples of 1/64.
fn equal_mass(rng: &mut ChaCha8Rng, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let n_mu = rng.random_range(1..=6);
    let ticks: Vec<i32> = (0..n_mu).map(|_| rng.random_range(1..=64)).collect();
    let total: i32 = ticks.iter().sum();
    let min_nu = ((total + 63) / 64) as usize;
    let n_nu = rng.random_range(min_nu.max(1)..=6);
    // Start from the even split and move single ticks at random.
    let mut parts = vec![total / n_nu as i32; n_nu];
    for p in parts.iter_mut().take((total % n_nu as i32) as usize) {
        *p += 1;
    }
    for _ in 0..4 * n_nu {
        let (a, b) = (rng.random_range(0..n_nu), rng.random_range(0..n_nu));
        if parts[a] > 1 && parts[b] < 64 {
            parts[a] -= 1;
            parts[b] += 1;
        }
    }
    let mu = ticks
        .iter()
        .map(|t| (grid_point(rng, d, 32), *t as f64 / 64.0))
        .collect();
    let nu = parts
        .iter()
        .map(|t| (grid_point(rng, d, 32), *t as f64 / 64.0))
        .collect();
    (measure(d, mu), measure(d, nu))
}

/// Each atom of `mu` is spread into two points with weights (1/2, 1/2) or
/// three points with weights (1/2, 1/4, 1/4) keeping its barycenter.
fn constructed_cx(rng: &mut ChaCha8Rng, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    loop {
        let n_mu = rng.random_range(1..=3);
        let mut mu = Vec::new();
        let mut nu = Vec::new();
        let mut budget = 6;
        for i in 0..n_mu {
            let x = grid_point(rng, d, 24);
            let m = rng.random_range(1..=16) as f64 / 16.0;
            let left = n_mu - i - 1;
            let triple = budget - 3 >= 2 * left && rng.random_bool(0.5);
            let mut step = || loop {
                let s = grid_point(rng, d, 16);
                if s.iter().any(|v| *v != 0.0) {
                    break s;
                }
            };
            let add = |x: &[f64], s: &[f64], k: f64| -> Vec<f64> {
                x.iter().zip(s).map(|(a, b)| a + k * b).collect()
            };
            if triple {
                let (a, b) = (step(), step());
                nu.push((add(&x, &a, 1.0), m / 2.0));
                nu.push((add(&x, &b, 1.0), m / 4.0));
                let c: Vec<f64> = a.iter().zip(&b).map(|(p, q)| -2.0 * p - q).collect();
                nu.push((add(&x, &c, 1.0), m / 4.0));
                budget -= 3;
            } else {
                let s = step();
                nu.push((add(&x, &s, 1.0), m / 2.0));
                nu.push((add(&x, &s, -1.0), m / 2.0));
                budget -= 2;
            }
            mu.push((x, m));
        }
        let (mu, nu) = (measure(d, mu), measure(d, nu));
        if mu.atoms().iter().chain(nu.atoms()).all(|a| a.mass <= 1.0) {
            return (mu, nu);
        }
    }
}

fn constructed_cxp(rng: &mut ChaCha8Rng, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let (mu, nu) = constructed_cx(rng, d);
    if nu.len() < 6 && rng.random_bool(0.5) {
        let extra = measure(d, vec![(grid_point(rng, d, 32), grid_mass(rng))]);
        let nu2 = nu.plus(&extra).unwrap();
        if nu2.atoms().iter().all(|a| a.mass <= 1.0) {
            return (mu, nu2);
        }
    }
    (mu.scaled(0.5), nu)
}

fn translate(m: &DiscreteMeasure, shift: f64) -> DiscreteMeasure {
    measure(
        m.dimension(),
        m.atoms()
            .iter()
            .map(|a| (a.point.iter().map(|v| v + shift).collect(), a.mass))
            .collect(),
    )
}

/// `n` instances cycling through the four families, `d` in {1, 2, 3}. About
/// half are translated into the nonnegative orthant.
pub fn suite(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let d = rng.random_range(1..=3);
            let family = [
                Family::Independent,
                Family::EqualMass,
                Family::ConstructedCx,
                Family::ConstructedCxp,
            ][i % 4];
            let (mu, nu) = match family {
                Family::Independent => independent(&mut rng, d),
                Family::EqualMass => equal_mass(&mut rng, d),
                Family::ConstructedCx => constructed_cx(&mut rng, d),
                Family::ConstructedCxp => constructed_cxp(&mut rng, d),
            };
            let (mu, nu) = if rng.random_bool(0.5) {
                (translate(&mu, 6.0), translate(&nu, 6.0))
            } else {
                (mu, nu)
            };
            Instance { family, mu, nu }
        })
        .collect()
}

pub fn example_one() -> (DiscreteMeasure, DiscreteMeasure) {
    (
        measure(2, vec![(vec![-1.0, 0.0], 0.5), (vec![1.0, 0.0], 0.5)]),
        measure(
            2,
            vec![
                (vec![-1.0, -1.0], 0.25),
                (vec![-1.0, 1.0], 0.25),
                (vec![1.0, -1.0], 0.25),
                (vec![1.0, 1.0], 0.25),
            ],
        ),
    )
}

pub fn example_two() -> (DiscreteMeasure, DiscreteMeasure) {
    let h = 3f64.sqrt() / 2.0;
    (
        measure(
            2,
            vec![(vec![0.5, 0.0], 1.0 / 3.0), (vec![-0.25, 0.0], 2.0 / 3.0)],
        ),
        measure(
            2,
            vec![
                (vec![1.0, 0.0], 1.0 / 3.0),
                (vec![-0.5, h], 1.0 / 3.0),
                (vec![-0.5, -h], 1.0 / 3.0),
            ],
        ),
    )
}
