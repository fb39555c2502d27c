//! Dense-tableau, bounded-variable primal simplex with Bland's rule.
//!
//! Every row `a x (<=|=|>=) b` gets a slack column `s` so that `a x + s = b`,
//! with `s >= 0`, `s <= 0` or `s = 0` depending on the relation. Nonbasic
//! columns sit at one of their bounds (or at zero when free). Phase one adds an
//! artificial column to each row whose slack cannot absorb the initial residual.

use super::scalar::LpScalar;
use super::{LpError, Relation};

/// Minimization problem in the engine's native form.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub rel: Vec<Relation>,
    pub c: Vec<T>,
    pub lower: Vec<Option<T>>,
    pub upper: Vec<Option<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution<T> {
    pub status: RawStatus,
    /// Structural values: optimum, phase-one end point, or the vertex where an
    /// unbounded ray starts.
    pub x: Vec<T>,
    /// Row duals of the minimization problem (optimal only).
    pub y: Vec<T>,
    /// Structural reduced costs `c - A^T y` (optimal only).
    pub reduced: Vec<T>,
    /// `z` with `min_{box} z^T A x > z^T b` and slack-compatible signs.
    pub farkas: Option<Vec<T>>,
    pub ray: Option<Vec<T>>,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

enum Column {
    Structural(usize),
    Slack(usize),
    Artificial { row: usize, sign_negative: bool },
}

/// Pivots between tableau rebuilds in floating point.
const REINVERT_EVERY: usize = 50;

struct Engine<'a, T> {
    prob: &'a StandardForm<T>,
    m: usize,
    n: usize,
    tab: Vec<Vec<T>>,
    x: Vec<T>,
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
    basis: Vec<usize>,
    pos: Vec<Option<usize>>,
    columns: Vec<Column>,
    pivots: usize,
    max_pivots: usize,
    /// Pivoted since the last rebuild.
    stale: bool,
}

pub(crate) fn run<T: LpScalar>(
    prob: &StandardForm<T>,
    phase_one_only: bool,
    max_pivots: usize,
) -> Result<RawSolution<T>, LpError> {
    let mut eng = Engine::new(prob, max_pivots);
    let has_art = eng.columns.len() > eng.n + eng.m;

    if has_art {
        let cost1: Vec<T> = eng
            .columns
            .iter()
            .map(|c| match c {
                Column::Artificial { .. } => T::one(),
                _ => T::zero(),
            })
            .collect();
        if eng.optimize(&cost1)?.is_some() {
            // Phase one is bounded below by zero.
            return Err(LpError::NumericalFailure {
                pivots: eng.pivots,
                reason: "phase one reported unbounded".into(),
            });
        }
        eng.refresh_basic_values();
        let infeasibility = eng.artificial_sum();
        if infeasibility > T::feas_tol() {
            let y = eng.duals(&cost1);
            let farkas: Vec<T> = y.into_iter().map(|v| -v).collect();
            return Ok(RawSolution {
                status: RawStatus::Infeasible,
                x: eng.x[..eng.n].to_vec(),
                y: Vec::new(),
                reduced: Vec::new(),
                farkas: Some(farkas),
                ray: None,
                pivots: eng.pivots,
            });
        }
        eng.retire_artificials();
    }

    if phase_one_only {
        return Ok(RawSolution {
            status: RawStatus::Optimal,
            x: eng.x[..eng.n].to_vec(),
            y: Vec::new(),
            reduced: Vec::new(),
            farkas: None,
            ray: None,
            pivots: eng.pivots,
        });
    }

    let mut cost2 = vec![T::zero(); eng.columns.len()];
    cost2[..eng.n].clone_from_slice(&prob.c);
    if let Some((q, dir)) = eng.optimize(&cost2)? {
        let mut ray = vec![T::zero(); eng.n];
        let s = match dir {
            Dir::Up => T::one(),
            Dir::Down => -T::one(),
        };
        if q < eng.n {
            ray[q] = s.clone();
        }
        for i in 0..eng.m {
            let bi = eng.basis[i];
            if bi < eng.n {
                ray[bi] = -(s.clone() * eng.tab[i][q].clone());
            }
        }
        return Ok(RawSolution {
            status: RawStatus::Unbounded,
            x: eng.x[..eng.n].to_vec(),
            y: Vec::new(),
            reduced: Vec::new(),
            farkas: None,
            ray: Some(ray),
            pivots: eng.pivots,
        });
    }
    eng.refresh_basic_values();
    let y = eng.duals(&cost2);
    let reduced = (0..eng.n)
        .map(|j| {
            let mut d = prob.c[j].clone();
            for (i, yi) in y.iter().enumerate() {
                d = d - yi.clone() * prob.a[i][j].clone();
            }
            d
        })
        .collect();
    Ok(RawSolution {
        status: RawStatus::Optimal,
        x: eng.x[..eng.n].to_vec(),
        y,
        reduced,
        farkas: None,
        ray: None,
        pivots: eng.pivots,
    })
}

impl<'a, T: LpScalar> Engine<'a, T> {
    fn new(prob: &'a StandardForm<T>, max_pivots: usize) -> Self {
        let m = prob.b.len();
        let n = prob.c.len();
        let mut x: Vec<T> = (0..n)
            .map(|j| match (&prob.lower[j], &prob.upper[j]) {
                (Some(l), _) => l.clone(),
                (None, Some(u)) => u.clone(),
                (None, None) => T::zero(),
            })
            .collect();
        let mut lower = prob.lower.clone();
        let mut upper = prob.upper.clone();
        let mut columns: Vec<Column> = (0..n).map(Column::Structural).collect();
        for i in 0..m {
            columns.push(Column::Slack(i));
            let (lo, hi) = match prob.rel[i] {
                Relation::Le => (Some(T::zero()), None),
                Relation::Ge => (None, Some(T::zero())),
                Relation::Eq => (Some(T::zero()), Some(T::zero())),
            };
            lower.push(lo);
            upper.push(hi);
        }

        let mut basis = vec![0; m];
        let mut residuals = Vec::with_capacity(m);
        let mut art_rows = Vec::new();
        for i in 0..m {
            let mut r = prob.b[i].clone();
            for j in 0..n {
                if !prob.a[i][j].is_zero() {
                    r = r - prob.a[i][j].clone() * x[j].clone();
                }
            }
            let fits = match prob.rel[i] {
                Relation::Le => !r.is_negative(),
                Relation::Ge => !r.is_positive(),
                Relation::Eq => r.is_zero(),
            };
            if !fits {
                art_rows.push(i);
            }
            residuals.push((r, fits));
        }
        for i in 0..m {
            let (r, fits) = &residuals[i];
            x.push(if *fits { r.clone() } else { T::zero() });
            if *fits {
                basis[i] = n + i;
            }
        }
        let mut sign_negative = vec![false; m];
        for &i in &art_rows {
            let r = residuals[i].0.clone();
            sign_negative[i] = r.is_negative();
            basis[i] = columns.len();
            columns.push(Column::Artificial {
                row: i,
                sign_negative: sign_negative[i],
            });
            lower.push(Some(T::zero()));
            upper.push(None);
            x.push(r.abs());
        }

        let ncols = columns.len();
        let mut tab = vec![vec![T::zero(); ncols]; m];
        for i in 0..m {
            let row = &mut tab[i];
            row[..n].clone_from_slice(&prob.a[i]);
            row[n + i] = T::one();
        }
        for (k, &i) in art_rows.iter().enumerate() {
            let col = n + m + k;
            tab[i][col] = if sign_negative[i] {
                -T::one()
            } else {
                T::one()
            };
            if sign_negative[i] {
                // Basis column is -e_i, so B^{-1} negates the row.
                for v in tab[i].iter_mut() {
                    *v = -v.clone();
                }
            }
        }
        let mut pos = vec![None; ncols];
        for (i, &bi) in basis.iter().enumerate() {
            pos[bi] = Some(i);
        }
        Self {
            prob,
            m,
            n,
            tab,
            x,
            lower,
            upper,
            basis,
            pos,
            columns,
            pivots: 0,
            max_pivots,
            stale: false,
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        matches!((&self.lower[j], &self.upper[j]), (Some(l), Some(u)) if l >= u)
    }

    fn can_move(&self, j: usize, dir: Dir) -> bool {
        match dir {
            Dir::Up => self.upper[j].as_ref().is_none_or(|u| self.x[j] < *u),
            Dir::Down => self.lower[j].as_ref().is_none_or(|l| self.x[j] > *l),
        }
    }

    /// Runs primal simplex iterations for `cost`. Returns the entering column
    /// and direction of an unbounded ray, or `None` at optimality.
    fn optimize(&mut self, cost: &[T]) -> Result<Option<(usize, Dir)>, LpError> {
        let ncols = self.columns.len();
        loop {
            if self.pivots >= self.max_pivots {
                return Err(LpError::NumericalFailure {
                    pivots: self.pivots,
                    reason: "pivot budget exhausted".into(),
                });
            }
            let cb: Vec<(usize, T)> = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &bj)| !cost[bj].is_zero())
                .map(|(i, &bj)| (i, cost[bj].clone()))
                .collect();

            // Bland: lowest-index improving column.
            let mut entering = None;
            for j in 0..ncols {
                if self.pos[j].is_some() || self.is_fixed(j) {
                    continue;
                }
                let mut dj = cost[j].clone();
                for (i, ci) in &cb {
                    let t = &self.tab[*i][j];
                    if !t.is_zero() {
                        dj = dj - ci.clone() * t.clone();
                    }
                }
                if dj < -T::opt_tol() && self.can_move(j, Dir::Up) {
                    entering = Some((j, Dir::Up));
                    break;
                }
                if dj > T::opt_tol() && self.can_move(j, Dir::Down) {
                    entering = Some((j, Dir::Down));
                    break;
                }
            }
            let Some((q, dir)) = entering else {
                if self.stale {
                    // Confirm optimality on a freshly rebuilt tableau.
                    self.reinvert();
                    continue;
                }
                return Ok(None);
            };

            // Two-pass ratio test. The first pass finds the largest step
            // allowed with bounds relaxed by `harris_tol`; the second picks,
            // among rows blocking within that step, one with a large pivot,
            // lowest basic index first. With exact scalars both tolerances
            // vanish and this is Bland's rule.
            let exact = T::pivot_tol().is_zero();
            let relax = if exact { T::zero() } else { T::from_f64(1e-9) };
            let mut rows: Vec<(usize, T, T)> = Vec::new();
            let mut theta_max: Option<T> = None;
            for i in 0..self.m {
                let alpha = &self.tab[i][q];
                if alpha.abs() <= T::pivot_tol() {
                    continue;
                }
                // Rate of change of basic i per unit step of the entering column.
                let rate = match dir {
                    Dir::Up => -alpha.clone(),
                    Dir::Down => alpha.clone(),
                };
                let bi = self.basis[i];
                let room = if rate.is_negative() {
                    self.lower[bi]
                        .as_ref()
                        .map(|l| self.x[bi].clone() - l.clone())
                } else {
                    self.upper[bi]
                        .as_ref()
                        .map(|u| u.clone() - self.x[bi].clone())
                };
                let Some(room) = room else { continue };
                let room = if room.is_negative() { T::zero() } else { room };
                let r = rate.abs();
                let relaxed = (room.clone() + relax.clone()) / r.clone();
                if theta_max.as_ref().is_none_or(|t| relaxed < *t) {
                    theta_max = Some(relaxed);
                }
                rows.push((i, room / r, alpha.abs()));
            }
            let flip = match (&self.lower[q], &self.upper[q]) {
                (Some(l), Some(u)) => Some(u.clone() - l.clone()),
                _ => None,
            };
            let (theta, leave) = match (flip, theta_max) {
                (None, None) => return Ok(Some((q, dir))),
                (Some(f), None) => (f, None),
                (Some(f), Some(t)) if f <= t => (f, None),
                (_, Some(t)) => {
                    let blocking: Vec<&(usize, T, T)> =
                        rows.iter().filter(|(_, th, _)| *th <= t).collect();
                    let big = blocking
                        .iter()
                        .map(|(_, _, a)| a.clone())
                        .reduce(|a, b| if b > a { b } else { a })
                        .unwrap();
                    let floor = if exact {
                        T::zero()
                    } else {
                        big * T::from_f64(1e-2)
                    };
                    let &&(i, ref th, _) = blocking
                        .iter()
                        .filter(|(_, _, a)| *a >= floor)
                        .min_by_key(|(i, _, _)| self.basis[*i])
                        .unwrap();
                    (th.clone(), Some(i))
                }
            };

            let step = match dir {
                Dir::Up => theta.clone(),
                Dir::Down => -theta.clone(),
            };
            if !step.is_zero() {
                self.x[q] = self.x[q].clone() + step.clone();
                for i in 0..self.m {
                    let t = &self.tab[i][q];
                    if !t.is_zero() {
                        let bi = self.basis[i];
                        self.x[bi] = self.x[bi].clone() - step.clone() * t.clone();
                    }
                }
            }
            match leave {
                None => {
                    self.x[q] = match dir {
                        Dir::Up => self.upper[q].clone().unwrap(),
                        Dir::Down => self.lower[q].clone().unwrap(),
                    };
                }
                Some(r) => {
                    let br = self.basis[r];
                    let rate_neg = match dir {
                        Dir::Up => self.tab[r][q].is_positive(),
                        Dir::Down => self.tab[r][q].is_negative(),
                    };
                    let bound = if rate_neg {
                        self.lower[br].clone()
                    } else {
                        self.upper[br].clone()
                    };
                    if let Some(b) = bound {
                        self.x[br] = b;
                    }
                    self.pivot(r, q);
                }
            }
            self.pivots += 1;
            self.stale = true;
            if self.pivots.is_multiple_of(REINVERT_EVERY) {
                self.reinvert();
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.tab[r][q].clone();
        for v in self.tab[r].iter_mut() {
            if !v.is_zero() {
                *v = v.clone() / piv.clone();
            }
        }
        let pivot_row = self.tab[r].clone();
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q].clone();
            if f.is_zero() {
                continue;
            }
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
            row[q] = T::zero();
        }
        let old = self.basis[r];
        self.pos[old] = None;
        self.basis[r] = q;
        self.pos[q] = Some(r);
    }

    fn artificial_sum(&self) -> T {
        let mut s = T::zero();
        for (j, c) in self.columns.iter().enumerate() {
            if matches!(c, Column::Artificial { .. }) {
                s = s + self.x[j].clone();
            }
        }
        s
    }

    /// Pivots zero-valued artificials out of the basis and fixes them at zero.
    fn retire_artificials(&mut self) {
        let first_art = self.n + self.m;
        for r in 0..self.m {
            if self.basis[r] < first_art {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..first_art {
                if self.pos[j].is_some() {
                    continue;
                }
                let a = self.tab[r][j].abs();
                if a > T::pivot_tol() && best.as_ref().is_none_or(|(_, b)| a > *b) {
                    best = Some((j, a));
                }
            }
            let art = self.basis[r];
            self.x[art] = T::zero();
            if let Some((j, _)) = best {
                self.pivot(r, j);
            }
        }
        for j in first_art..self.columns.len() {
            self.upper[j] = Some(T::zero());
        }
        self.refresh_basic_values();
    }

    fn column_entry(&self, col: usize, row: usize) -> T {
        match self.columns[col] {
            Column::Structural(j) => self.prob.a[row][j].clone(),
            Column::Slack(i) => {
                if i == row {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Column::Artificial {
                row: i,
                sign_negative,
            } => {
                if i != row {
                    T::zero()
                } else if sign_negative {
                    -T::one()
                } else {
                    T::one()
                }
            }
        }
    }

    fn basis_matrix(&self) -> Vec<Vec<T>> {
        (0..self.m)
            .map(|row| {
                self.basis
                    .iter()
                    .map(|&col| self.column_entry(col, row))
                    .collect()
            })
            .collect()
    }

    /// Recomputes basic values from the original data, discarding drift
    /// accumulated by incremental updates.
    fn refresh_basic_values(&mut self) {
        if self.m == 0 {
            return;
        }
        let mut rhs = self.prob.b.clone();
        for col in 0..self.columns.len() {
            if self.pos[col].is_some() || self.x[col].is_zero() {
                continue;
            }
            for (row, r) in rhs.iter_mut().enumerate() {
                let e = self.column_entry(col, row);
                if !e.is_zero() {
                    *r = r.clone() - e * self.x[col].clone();
                }
            }
        }
        if let Some(xb) = solve_dense(self.basis_matrix(), rhs) {
            for (i, v) in xb.into_iter().enumerate() {
                self.x[self.basis[i]] = v;
            }
        }
    }

    /// Rebuilds the tableau as `B^{-1} [A I art]` from the original data.
    /// Only floating point needs this; rational tableaus do not drift.
    fn reinvert(&mut self) {
        self.stale = false;
        if T::pivot_tol().is_zero() || self.m == 0 {
            return;
        }
        let ncols = self.columns.len();
        let full: Vec<Vec<T>> = (0..self.m)
            .map(|row| (0..ncols).map(|col| self.column_entry(col, row)).collect())
            .collect();
        if let Some(mut tab) = solve_dense_multi(self.basis_matrix(), full) {
            for (i, row) in tab.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    if self.pos[j] == Some(i) {
                        *v = T::one();
                    } else if self.pos[j].is_some() || v.abs() <= T::from_f64(1e-14) {
                        *v = T::zero();
                    }
                }
            }
            self.tab = tab;
        }
        self.refresh_basic_values();
    }

    /// Duals `y` with `B^T y = c_B`.
    fn duals(&self, cost: &[T]) -> Vec<T> {
        let bm = self.basis_matrix();
        let bt: Vec<Vec<T>> = (0..self.m)
            .map(|i| (0..self.m).map(|k| bm[k][i].clone()).collect())
            .collect();
        let cb: Vec<T> = self.basis.iter().map(|&j| cost[j].clone()).collect();
        solve_dense(bt, cb.clone()).unwrap_or_else(|| {
            // Fall back to the tableau: B^{-1} sits in the slack columns.
            (0..self.m)
                .map(|i| {
                    let mut s = T::zero();
                    for (k, ck) in cb.iter().enumerate() {
                        s = s + ck.clone() * self.tab[k][self.n + i].clone();
                    }
                    s
                })
                .collect()
        })
    }
}

/// Gaussian elimination with partial pivoting. `None` if singular.
pub(crate) fn solve_dense<T: LpScalar>(a: Vec<Vec<T>>, b: Vec<T>) -> Option<Vec<T>> {
    let rhs = b.into_iter().map(|v| vec![v]).collect();
    solve_dense_multi(a, rhs).map(|x| x.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

/// Solves `A X = B` for a square `A` and an `n x k` right-hand side.
fn solve_dense_multi<T: LpScalar>(mut a: Vec<Vec<T>>, mut b: Vec<Vec<T>>) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| {
            a[i][k]
                .abs()
                .partial_cmp(&a[j][k].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[p][k].is_zero() || a[p][k].abs() <= T::pivot_tol() * T::from_f64(1e-4) {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        let (top, rest) = a.split_at_mut(k + 1);
        let (btop, brest) = b.split_at_mut(k + 1);
        let (pivot_row, pivot_rhs) = (&top[k], &btop[k]);
        for (row, rhs) in rest.iter_mut().zip(brest.iter_mut()) {
            if row[k].is_zero() {
                continue;
            }
            let f = row[k].clone() / pivot_row[k].clone();
            for j in k..n {
                if !pivot_row[j].is_zero() {
                    row[j] = row[j].clone() - f.clone() * pivot_row[j].clone();
                }
            }
            for (r, p) in rhs.iter_mut().zip(pivot_rhs) {
                if !p.is_zero() {
                    *r = r.clone() - f.clone() * p.clone();
                }
            }
        }
    }
    for k in (0..n).rev() {
        let (top, rest) = b.split_at_mut(k + 1);
        let row = &mut top[k];
        for (j, xj) in rest.iter().enumerate() {
            let akj = &a[k][k + 1 + j];
            if akj.is_zero() {
                continue;
            }
            for (r, x) in row.iter_mut().zip(xj) {
                if !x.is_zero() {
                    *r = r.clone() - akj.clone() * x.clone();
                }
            }
        }
        for r in row.iter_mut() {
            *r = r.clone() / a[k][k].clone();
        }
    }
    Some(b)
}
