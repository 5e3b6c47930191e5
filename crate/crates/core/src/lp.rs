//! Dense linear programming by the revised simplex method.
//!
//! Solves `max c^T x` subject to equality rows, `<=` rows and box bounds
//! `lo <= x <= hi` (`lo` finite, `hi` optional). Two phases with one
//! artificial per row; Bland's rule (lowest eligible index) for both the
//! entering and the leaving variable, so the path and the returned basis are
//! fully determined by the input order. The basis matrix is refactored with
//! LU at every iteration, which is plenty for the few dozen rows seen here.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Dimension(String),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

/// One linear constraint row `coeffs . x (op) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub rhs: T,
}

impl<T> Constraint<T> {
    pub fn new(coeffs: Vec<T>, rhs: T) -> Self {
        Self { coeffs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    /// Maximised.
    pub objective: Vec<T>,
    pub equalities: Vec<Constraint<T>>,
    pub upper_rows: Vec<Constraint<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<Option<T>>,
}

impl<T: Real> LinearProgram<T> {
    /// `max c^T x` with `x >= 0` and no rows yet.
    pub fn maximize(objective: Vec<T>) -> Self {
        let n = objective.len();
        Self {
            objective,
            equalities: Vec::new(),
            upper_rows: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![None; n],
        }
    }

    pub fn eq(mut self, coeffs: Vec<T>, rhs: T) -> Self {
        self.equalities.push(Constraint::new(coeffs, rhs));
        self
    }

    pub fn le(mut self, coeffs: Vec<T>, rhs: T) -> Self {
        self.upper_rows.push(Constraint::new(coeffs, rhs));
        self
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Structural variables in the final basis, ascending.
    pub basis: Vec<usize>,
    /// Whether each `<=` row holds with equality.
    pub binding: Vec<bool>,
    pub iterations: usize,
}

/// Tolerances of the simplex method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions<T> {
    /// Reduced costs and pivot entries below this are treated as zero.
    pub tol: T,
    /// Phase-one residual above this means infeasible.
    pub feas_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SimplexOptions<T> {
    fn default() -> Self {
        let tol = T::lit(1e-9).max(T::epsilon().sqrt() * T::lit(10.0));
        Self {
            tol,
            feas_tol: tol,
            max_iter: 50_000,
        }
    }
}

pub fn solve_lp<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    solve_lp_with(lp, &SimplexOptions::default())
}

/// Standard form `A z = b`, `z >= 0`, `b >= 0`; columns are structural
/// (shifted by `lo`), then slacks, then artificials.
struct StandardForm<T> {
    a: Matrix<T>,
    b: Vec<T>,
    n_struct: usize,
    n_slack: usize,
    /// Slack column of each `<=` row of the original problem.
    ub_slack: Vec<usize>,
}

fn standard_form<T: Real>(lp: &LinearProgram<T>) -> Result<StandardForm<T>, LpError> {
    let n = lp.n_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(LpError::Dimension(
            "bounds length differs from objective".into(),
        ));
    }
    for c in lp.equalities.iter().chain(&lp.upper_rows) {
        if c.coeffs.len() != n {
            return Err(LpError::Dimension(format!(
                "row has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }
    if let Some(j) = lp.lower.iter().position(|l| !l.is_finite()) {
        return Err(LpError::Dimension(format!(
            "lower bound of x{j} must be finite"
        )));
    }
    let shift = |c: &Constraint<T>| c.rhs - dot(&c.coeffs, &lp.lower);

    // rows: equalities, <= rows, upper-bound rows
    let mut rows: Vec<(Vec<T>, T, bool)> = Vec::new();
    for c in &lp.equalities {
        rows.push((c.coeffs.clone(), shift(c), false));
    }
    for c in &lp.upper_rows {
        rows.push((c.coeffs.clone(), shift(c), true));
    }
    for (j, hi) in lp.upper.iter().enumerate() {
        if let Some(hi) = *hi {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            rows.push((e, hi - lp.lower[j], true));
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.2).count();
    let cols = n + n_slack + m;
    let mut a = Matrix::zeros(m, cols);
    let mut b = vec![T::zero(); m];
    let mut ub_slack = Vec::new();
    let mut slack = n;
    for (i, (coeffs, rhs, has_slack)) in rows.into_iter().enumerate() {
        let sign = if rhs < T::zero() { -T::one() } else { T::one() };
        for (j, &v) in coeffs.iter().enumerate() {
            a[(i, j)] = sign * v;
        }
        if has_slack {
            a[(i, slack)] = sign;
            if i < lp.equalities.len() + lp.upper_rows.len() {
                ub_slack.push(slack);
            }
            slack += 1;
        }
        a[(i, n + n_slack + i)] = T::one();
        b[i] = sign * rhs;
    }
    Ok(StandardForm {
        a,
        b,
        n_struct: n,
        n_slack,
        ub_slack,
    })
}

struct Simplex<'a, T> {
    sf: &'a StandardForm<T>,
    basis: Vec<usize>,
    opts: SimplexOptions<T>,
    iterations: usize,
}

impl<'a, T: Real> Simplex<'a, T> {
    fn basis_matrix(&self) -> Matrix<T> {
        let m = self.sf.a.rows();
        Matrix::from_fn(m, m, |i, j| self.sf.a[(i, self.basis[j])])
    }

    fn column(&self, j: usize) -> Vec<T> {
        self.sf.a.column(j)
    }

    /// Iterates to optimality of `max cost^T z` over columns `< allowed`.
    fn optimize(&mut self, cost: &[T], allowed: usize) -> Result<(), LpError> {
        let m = self.sf.a.rows();
        loop {
            if self.iterations >= self.opts.max_iter {
                return Err(LpError::IterationLimit(self.opts.max_iter));
            }
            let lu = self
                .basis_matrix()
                .lu()
                .map_err(|_| LpError::Dimension("basis became singular".into()))?;
            let x_b = lu.solve(&self.sf.b);
            let c_b: Vec<T> = self.basis.iter().map(|&j| cost[j]).collect();
            let y = lu.solve_transpose(&c_b);
            let in_basis = |j: usize| self.basis.contains(&j);
            let entering = (0..allowed)
                .find(|&j| !in_basis(j) && cost[j] - dot(&y, &self.column(j)) > self.opts.tol);
            let Some(e) = entering else {
                return Ok(());
            };
            let u = lu.solve(&self.column(e));
            let mut leave: Option<(usize, T)> = None;
            for i in 0..m {
                if u[i] > self.opts.tol {
                    let ratio = x_b[i].max(T::zero()) / u[i];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= self.opts.tol * T::one().max(lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.basis[r] = e;
            self.iterations += 1;
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural or
    /// slack column can replace them; rows where none can are redundant.
    fn drive_out_artificials(&mut self) {
        let first_art = self.sf.n_struct + self.sf.n_slack;
        let m = self.sf.a.rows();
        for r in 0..m {
            if self.basis[r] < first_art {
                continue;
            }
            let Ok(lu) = self.basis_matrix().lu() else {
                return;
            };
            // row r of B^-1 A
            let mut e_r = vec![T::zero(); m];
            e_r[r] = T::one();
            let row = lu.solve_transpose(&e_r);
            if let Some(j) = (0..first_art).find(|&j| {
                !self.basis.contains(&j) && dot(&row, &self.column(j)).abs() > self.opts.tol
            }) {
                self.basis[r] = j;
            }
        }
    }

    fn values(&self) -> Vec<T> {
        let lu = self
            .basis_matrix()
            .lu()
            .expect("basis nonsingular after optimisation");
        let x_b = lu.solve(&self.sf.b);
        let mut z = vec![T::zero(); self.sf.a.cols()];
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = x_b[i].max(T::zero());
        }
        z
    }
}

pub fn solve_lp_with<T: Real>(
    lp: &LinearProgram<T>,
    opts: &SimplexOptions<T>,
) -> Result<LpSolution<T>, LpError> {
    let sf = standard_form(lp)?;
    let (m, cols) = (sf.a.rows(), sf.a.cols());
    let first_art = sf.n_struct + sf.n_slack;
    let mut sx = Simplex {
        sf: &sf,
        basis: (first_art..cols).collect(),
        opts: *opts,
        iterations: 0,
    };

    if m > 0 {
        let mut phase1 = vec![T::zero(); cols];
        for c in phase1.iter_mut().skip(first_art) {
            *c = -T::one();
        }
        sx.optimize(&phase1, cols)?;
        let z = sx.values();
        let infeas: T = z[first_art..].iter().copied().sum();
        let scale = T::one().max(sf.b.iter().fold(T::zero(), |a, &x| a.max(x)));
        if infeas > opts.feas_tol * scale {
            return Err(LpError::Infeasible);
        }
        sx.drive_out_artificials();
    }

    let mut cost = vec![T::zero(); cols];
    cost[..sf.n_struct].copy_from_slice(&lp.objective);
    sx.optimize(&cost, first_art)?;
    let z = sx.values();
    let x: Vec<T> = (0..sf.n_struct).map(|j| z[j] + lp.lower[j]).collect();
    let objective = dot(&lp.objective, &x);
    let mut basis: Vec<usize> = sx
        .basis
        .iter()
        .copied()
        .filter(|&j| j < sf.n_struct)
        .collect();
    basis.sort_unstable();
    let bind_tol = T::lit(1e-8).max(opts.tol);
    let binding = lp
        .upper_rows
        .iter()
        .zip(&sf.ub_slack)
        .map(|(c, &s)| z[s] <= bind_tol * T::one().max(c.rhs.abs()))
        .collect();
    Ok(LpSolution {
        x,
        objective,
        basis,
        binding,
        iterations: sx.iterations,
    })
}
