//! Variance-driven exploration: allocations over the admissible polytope,
//! the worst-case relative-discrepancy program and its sequential use.
//!
//! An allocation `w` is a stationary state-action law of some exploration
//! policy. Those are exactly the points with `w >= 0`, `sum w = 1` and the
//! balance rows `sum_j w(i,j) = sum_k w_k P(i | k)`; the policy
//! `pi_w(j|i) = w(i,j) / sum_l w(i,l)` realises `w`.
//!
//! Both objectives handled here are maxima of terms `sum_k a_pk / w_k` with
//! `a_pk >= 0`, which are convex on the positive orthant. They are minimised
//! over `{w in W : w >= eta}` in epigraph form by a log-barrier Newton method.

use rand::Rng;
use thiserror::Error;

use crate::estimation::{
    empirical_model, EmpiricalModel, EstimationError, Simulator, TrajectoryDataset,
};
use crate::inference::{
    covariance_report, delta_q_variance, q_covariance_at, state_resolvent, CovarianceReport,
    InferenceError, InferenceOptions, PlugInSource, QCovariance,
};
use crate::linalg::Matrix;
use crate::lp::{solve_lp, LinearProgram, LpError};
use crate::mdp::{
    extended_transition, greedy_policy, solve_q, stationary_distribution, MdpError, MdpParams,
    Policy, QTable, TabularMdp,
};
use crate::rng::stream_rng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QocbaError {
    #[error("allocation polytope is empty for eta = {eta:e}")]
    Infeasible { eta: f64 },
    #[error("barrier solver stopped after {iterations} Newton steps: {reason} (objective {objective:e}, gap bound {gap:e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        gap: f64,
        reason: String,
    },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("pairs {0:?} unvisited after stage {1}; increase the first batch or mix the initial policy more")]
    Unvisited(Vec<usize>, usize),
    #[error("cost coefficients do not reproduce the variance of a Q-gap (error {0:e})")]
    Reconstruction(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl From<EstimationError> for QocbaError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::Unvisited(v) => QocbaError::Unvisited(v, 0),
            other => QocbaError::InvalidArgument(other.to_string()),
        }
    }
}

/// A point of the floored admissible polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub w: Vec<T>,
    pub eta: T,
}

/// Largest violation of the balance rows `sum_j w(i,j) = sum_k w_k P(i|k)`.
pub fn balance_residual<T: Real>(params: &MdpParams<T>, w: &[T]) -> T {
    let (m_s, m_a) = (params.m_s, params.m_a);
    let mut inflow = vec![T::zero(); m_s];
    for (k, &wk) in w.iter().enumerate() {
        for (i, &p) in params.transition_row(k).iter().enumerate() {
            inflow[i] += wk * p;
        }
    }
    (0..m_s).fold(T::zero(), |m, i| {
        let out: T = w[i * m_a..(i + 1) * m_a].iter().copied().sum();
        m.max((out - inflow[i]).abs())
    })
}

impl<T: Real> Allocation<T> {
    /// Validates `w >= eta`, `sum w = 1` and the balance rows within `1e-8`.
    pub fn new(params: &MdpParams<T>, w: Vec<T>, eta: T) -> Result<Self, QocbaError> {
        if w.len() != params.n_pairs() {
            return Err(QocbaError::InvalidAllocation(format!(
                "{} entries for {} pairs",
                w.len(),
                params.n_pairs()
            )));
        }
        let tol = T::lit(1e-8).max(T::epsilon() * T::lit(1e3));
        if let Some(k) = w.iter().position(|&x| !(x >= eta - tol)) {
            return Err(QocbaError::InvalidAllocation(format!(
                "w[{k}] = {} below floor {eta}",
                w[k]
            )));
        }
        let sum: T = w.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(QocbaError::InvalidAllocation(format!("sums to {sum}")));
        }
        let res = balance_residual(params, &w);
        if res > tol {
            return Err(QocbaError::InvalidAllocation(format!(
                "balance residual {res:e}"
            )));
        }
        Ok(Self { w, eta })
    }
}

/// `pi_w(j|i) = w(i,j) / sum_l w(i,l)`.
pub fn policy_from_allocation<T: Real>(
    w: &[T],
    m_s: usize,
    m_a: usize,
) -> Result<Policy<T>, QocbaError> {
    if w.len() != m_s * m_a {
        return Err(QocbaError::InvalidAllocation("length".into()));
    }
    let mut probs = Vec::with_capacity(w.len());
    for i in 0..m_s {
        let row = &w[i * m_a..(i + 1) * m_a];
        let mass: T = row.iter().copied().sum();
        if !(mass > T::zero()) {
            return Err(QocbaError::InvalidAllocation(format!(
                "state {i} has no mass"
            )));
        }
        probs.extend(row.iter().map(|&x| x / mass));
    }
    Ok(Policy::from_flat(m_s, m_a, probs)?)
}

/// Stationary state-action law of `policy`.
pub fn allocation_of_policy<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<Vec<T>, QocbaError> {
    Ok(stationary_distribution(&extended_transition(
        params, policy,
    )?)?)
}

/// Relative discrepancies `h_ij = gap_ij^2 / Var(Q_i,a* - Q_ij)` of every
/// non-greedy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyTable<T> {
    /// `((state, action), h)`.
    pub entries: Vec<((usize, usize), T)>,
    pub argmin: Option<(usize, usize)>,
}

pub fn discrepancy_table<T: Real>(qc: &QCovariance<T>) -> Result<DiscrepancyTable<T>, QocbaError> {
    let m_a = qc.q.m_a();
    let mut entries = Vec::new();
    for (i, &best) in qc.actions.iter().enumerate() {
        for j in (0..m_a).filter(|&j| j != best) {
            let gap = qc.q.get(i, best) - qc.q.get(i, j);
            let var = delta_q_variance(&qc.sigma, m_a, i, best, j)?;
            let h = if var > T::zero() {
                gap * gap / var
            } else {
                T::infinity()
            };
            entries.push(((i, j), h));
        }
    }
    let argmin = entries
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("comparable"))
        .map(|e| e.0);
    Ok(DiscrepancyTable { entries, argmin })
}

/// Per-comparison coefficients with `Var(Q_i,a* - Q_ij) = sum_k c_ij(k) / w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCoefficients<T> {
    pub m_s: usize,
    pub m_a: usize,
    /// `(state i, non-greedy action j)`, in state-then-action order.
    pub pairs: Vec<(usize, usize)>,
    pub c: Vec<Vec<T>>,
    /// `Q(i, a*(i)) - Q(i, j)`.
    pub gaps: Vec<T>,
}

/// Gaps below this are floored so a tie does not divide by zero.
pub const GAP_FLOOR: f64 = 1e-9;

impl<T: Real> CostCoefficients<T> {
    pub fn variance(&self, idx: usize, w: &[T]) -> T {
        self.c[idx].iter().zip(w).map(|(&c, &wk)| c / wk).sum()
    }

    /// Terms `c_ij / gap_ij^2` of the min-max program.
    pub fn objective_terms(&self) -> Vec<Vec<T>> {
        let floor = T::lit(GAP_FLOOR);
        self.c
            .iter()
            .zip(&self.gaps)
            .map(|(c, &g)| {
                let g2 = g.max(floor).powi(2);
                c.iter().map(|&x| x / g2).collect()
            })
            .collect()
    }

    /// `max_ij Var_ij(w) / gap_ij^2`, the reciprocal of the worst `h_ij`.
    pub fn objective(&self, w: &[T]) -> T {
        eval_terms(&self.objective_terms(), w)
    }
}

fn eval_terms<T: Real>(terms: &[Vec<T>], w: &[T]) -> T {
    terms
        .iter()
        .map(|a| a.iter().zip(w).map(|(&c, &wk)| c / wk).sum::<T>())
        .fold(T::zero(), T::max)
}

/// `c_ij(k) = ((e_ia* - e_ij)^T A)_k^2 (sigma2_R(k) + gamma^2 Var_{P_k}(V*))`.
///
/// Fails on near-tied greedy actions unless `qc` was built with `force`;
/// the identity against [`delta_q_variance`] is checked on ten fixed
/// positive allocations.
pub fn compute_cost_coefficients<T: Real>(
    qc: &QCovariance<T>,
) -> Result<CostCoefficients<T>, QocbaError> {
    if !qc.unique {
        let ties = crate::inference::check_unique_argmax(&qc.q, T::lit(GAP_FLOOR));
        return Err(InferenceError::NonUniqueArgmax(ties.iter().map(|t| t.state).collect()).into());
    }
    cost_coefficients_unchecked(qc)
}

fn cost_coefficients_unchecked<T: Real>(
    qc: &QCovariance<T>,
) -> Result<CostCoefficients<T>, QocbaError> {
    let (m_s, m_a) = (qc.q.m_s(), qc.q.m_a());
    let a = &qc.resolvent;
    let n = m_s * m_a;
    let mut pairs = Vec::new();
    let mut c = Vec::new();
    let mut gaps = Vec::new();
    for (i, &best) in qc.actions.iter().enumerate() {
        let kb = i * m_a + best;
        for j in (0..m_a).filter(|&j| j != best) {
            let kj = i * m_a + j;
            let coeff: Vec<T> = (0..n)
                .map(|k| {
                    let d = a[(kb, k)] - a[(kj, k)];
                    d * d * qc.noise[k]
                })
                .collect();
            pairs.push((i, j));
            c.push(coeff);
            gaps.push(qc.q.get(i, best) - qc.q.get(i, j));
        }
    }
    let out = CostCoefficients {
        m_s,
        m_a,
        pairs,
        c,
        gaps,
    };
    check_reconstruction(qc, &out)?;
    Ok(out)
}

fn check_reconstruction<T: Real>(
    qc: &QCovariance<T>,
    cc: &CostCoefficients<T>,
) -> Result<(), QocbaError> {
    let n = cc.m_s * cc.m_a;
    let mut rng = stream_rng(0x5eed, 0);
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e4));
    for _ in 0..10 {
        let w: Vec<T> = (0..n)
            .map(|_| T::lit(rng.random_range(0.05..1.0)))
            .collect();
        let d: Vec<T> = qc.noise.iter().zip(&w).map(|(&x, &wk)| x / wk).collect();
        let sigma = qc.resolvent.sandwich_diag(&d);
        for (idx, &(i, j)) in cc.pairs.iter().enumerate() {
            let direct = delta_q_variance(&sigma, cc.m_a, i, qc.actions[i], j)?;
            let via = cc.variance(idx, &w);
            let err = (direct - via).abs();
            if err > tol * T::one().max(direct.abs()) {
                return Err(QocbaError::Reconstruction(err.as_f64()));
            }
        }
    }
    Ok(())
}

/// Coefficients of `Var(chi*) = sum_k c(k) / w_k`: nonzero only on greedy
/// pairs `k = (i, a*(i))`, where `c(k) = (rho^T X)_i^2 (sigma2_R(k) + gamma^2 Var_{P_k}(V*))`.
pub fn chi_cost_coefficients<T: Real>(
    params: &MdpParams<T>,
    qc: &QCovariance<T>,
    rho: &[T],
) -> Result<Vec<T>, QocbaError> {
    if rho.len() != params.m_s {
        return Err(QocbaError::InvalidArgument("rho length".into()));
    }
    let policy = Policy::deterministic(params.m_a, &qc.actions);
    let x = state_resolvent(params, &policy)?;
    let rx = x.vec_mul(rho);
    let mut c = vec![T::zero(); params.n_pairs()];
    for (i, &a) in qc.actions.iter().enumerate() {
        let k = params.index(i, a);
        c[k] = rx[i] * rx[i] * qc.noise[k];
    }
    Ok(c)
}

/// Settings of the log-barrier solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Stop once the duality-gap bound is below `rel_tol` times the objective.
    pub rel_tol: f64,
    pub max_newton: usize,
    /// Barrier weight multiplier between centering steps.
    pub mu: f64,
    /// Initial barrier weight relative to the number of inequalities.
    pub t0: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            max_newton: 2_000,
            mu: 8.0,
            t0: 1.0,
        }
    }
}

/// Default floor on allocation entries.
pub const DEFAULT_ETA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome<T> {
    pub allocation: Allocation<T>,
    /// `max_p sum_k a_pk / w_k` at the returned point.
    pub objective: T,
    /// Epigraph level after each centering step (non-increasing).
    pub history: Vec<f64>,
    pub newton_steps: usize,
}

/// Minimises `max_p sum_k terms[p][k] / w_k` over `{w in W : w >= eta}`.
pub fn solve_minmax_allocation<T: Real>(
    terms: &[Vec<T>],
    params: &MdpParams<T>,
    eta: T,
    opts: &BarrierOptions,
) -> Result<SolverOutcome<T>, QocbaError> {
    let n = params.n_pairs();
    if terms.iter().any(|a| a.len() != n) {
        return Err(QocbaError::InvalidArgument(
            "coefficient vector length".into(),
        ));
    }
    if let Some(x) = terms
        .iter()
        .flatten()
        .find(|x| !(**x >= T::zero()) || !x.is_finite())
    {
        return Err(QocbaError::InvalidArgument(format!(
            "coefficient {x} is negative or not finite"
        )));
    }
    let eta_f = eta.as_f64();
    if !(eta_f >= 0.0) || eta_f * n as f64 >= 1.0 {
        return Err(QocbaError::Infeasible { eta: eta_f });
    }
    let p: Vec<f64> = params.p.iter().map(|x| x.as_f64()).collect();
    let w0 = strictly_feasible_start(params, &p, eta_f)?;
    let raw: Vec<Vec<f64>> = terms
        .iter()
        .map(|a| a.iter().map(|x| x.as_f64()).collect::<Vec<_>>())
        .filter(|a| a.iter().any(|&x| x > 0.0))
        .collect();
    let finish = |w: Vec<f64>, history: Vec<f64>, newton_steps: usize| {
        let w: Vec<T> = w.into_iter().map(T::lit).collect();
        let objective = eval_terms(terms, &w);
        SolverOutcome {
            allocation: Allocation { w, eta },
            objective,
            history,
            newton_steps,
        }
    };
    if raw.is_empty() {
        return Ok(finish(w0, vec![0.0], 0));
    }
    // scale so the starting objective is one; the minimiser is unchanged
    let f0 = eval_f64(&raw, &w0);
    let scaled: Vec<Vec<f64>> = raw
        .iter()
        .map(|a| a.iter().map(|x| x / f0).collect())
        .collect();
    let problem = Barrier {
        terms: &scaled,
        null: null_space(&balance_matrix(params.m_s, params.m_a, &p)),
        eta: eta_f,
    };
    let (w, history, steps) = problem.solve(w0, opts)?;
    let history = history.into_iter().map(|t| t * f0).collect();
    Ok(finish(w, history, steps))
}

fn eval_f64(terms: &[Vec<f64>], w: &[f64]) -> f64 {
    terms
        .iter()
        .map(|a| a.iter().zip(w).map(|(c, wk)| c / wk).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Balance rows for all but the last state (which is implied), then `sum w = 1`.
fn balance_matrix(m_s: usize, m_a: usize, p: &[f64]) -> Matrix<f64> {
    let n = m_s * m_a;
    let mut e = Matrix::zeros(m_s, n);
    for i in 0..m_s - 1 {
        for k in 0..n {
            let out = if k / m_a == i { 1.0 } else { 0.0 };
            e[(i, k)] = out - p[k * m_s + i];
        }
    }
    for k in 0..n {
        e[(m_s - 1, k)] = 1.0;
    }
    e
}

/// Uniform-policy stationary law if it clears the floor, else the
/// max-margin point `max s : w in W, w_k >= eta + s` from an LP.
fn strictly_feasible_start<T: Real>(
    params: &MdpParams<T>,
    p: &[f64],
    eta: f64,
) -> Result<Vec<f64>, QocbaError> {
    let (m_s, m_a) = (params.m_s, params.m_a);
    let n = m_s * m_a;
    let f64_params = MdpParams {
        m_s,
        m_a,
        gamma: params.gamma.as_f64(),
        mu_r: vec![0.0; n],
        sigma2_r: vec![0.0; n],
        p: p.to_vec(),
    };
    if let Ok(w) = allocation_of_policy(&f64_params, &Policy::uniform(m_s, m_a)) {
        if w.iter().all(|&x| x > eta * 1.5 + 1e-12) {
            return Ok(w);
        }
    }
    let e = balance_matrix(m_s, m_a, p);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut lp = LinearProgram::maximize(obj);
    for i in 0..m_s {
        let mut row = e.row(i).to_vec();
        row.push(0.0);
        lp = lp.eq(row, if i == m_s - 1 { 1.0 } else { 0.0 });
    }
    for k in 0..n {
        let mut row = vec![0.0; n + 1];
        row[k] = -1.0;
        row[n] = 1.0;
        lp = lp.le(row, -eta);
    }
    lp.lower[n] = -1.0;
    lp.upper[n] = Some(1.0);
    let sol = match solve_lp(&lp) {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Err(QocbaError::Infeasible { eta }),
        Err(e) => return Err(e.into()),
    };
    let margin = sol.x[n];
    if !(margin > 1e-12) {
        return Err(QocbaError::Infeasible { eta });
    }
    Ok(sol.x[..n].to_vec())
}

struct Barrier<'a> {
    terms: &'a [Vec<f64>],
    /// Orthonormal basis of the null space of the equality rows, as columns.
    null: Matrix<f64>,
    eta: f64,
}

/// Orthonormal basis of `{x : E x = 0}` by Gram-Schmidt (twice, for
/// stability) over the rows of `E` followed by the unit vectors.
fn null_space(e: &Matrix<f64>) -> Matrix<f64> {
    let n = e.cols();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut null: Vec<Vec<f64>> = Vec::new();
    let candidates = (0..e.rows())
        .map(|i| (e.row(i).to_vec(), true))
        .chain((0..n).map(|j| {
            let mut u = vec![0.0; n];
            u[j] = 1.0;
            (u, false)
        }));
    for (mut v, from_rows) in candidates {
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0.max(1.0) {
            v.iter_mut().for_each(|x| *x /= norm);
            if !from_rows {
                null.push(v.clone());
            }
            basis.push(v);
        }
    }
    Matrix::from_fn(n, null.len(), |i, j| null[j][i])
}

impl Barrier<'_> {
    fn n(&self) -> usize {
        self.null.rows()
    }

    /// Newton direction in `(w, t)` restricted to the equality null space,
    /// solved on the diagonally equilibrated reduced Hessian.
    fn newton_step(&self, g: &[f64], h: &Matrix<f64>) -> Option<Vec<f64>> {
        let n = self.n();
        let r = self.null.cols();
        // Z~ = blockdiag(Z, 1)
        let z = |i: usize, j: usize| -> f64 {
            match (i < n, j < r) {
                (true, true) => self.null[(i, j)],
                (false, false) => 1.0,
                _ => 0.0,
            }
        };
        let dim = r + 1;
        let hz = Matrix::from_fn(n + 1, dim, |i, j| {
            (0..=n).map(|k| h[(i, k)] * z(k, j)).sum::<f64>()
        });
        let hr = Matrix::from_fn(dim, dim, |i, j| {
            (0..=n).map(|k| z(k, i) * hz[(k, j)]).sum::<f64>()
        });
        let gr: Vec<f64> = (0..dim)
            .map(|j| (0..=n).map(|k| z(k, j) * g[k]).sum())
            .collect();
        let scale: Vec<f64> = (0..dim)
            .map(|i| 1.0 / hr[(i, i)].max(1e-300).sqrt())
            .collect();
        let eq = Matrix::from_fn(dim, dim, |i, j| hr[(i, j)] * scale[i] * scale[j]);
        let rhs: Vec<f64> = (0..dim).map(|i| -gr[i] * scale[i]).collect();
        let y = eq.lu().ok()?.solve(&rhs);
        let y: Vec<f64> = y.iter().zip(&scale).map(|(a, b)| a * b).collect();
        Some(
            (0..=n)
                .map(|i| (0..dim).map(|j| z(i, j) * y[j]).sum())
                .collect(),
        )
    }

    /// Barrier function at weight `tau`; `None` outside the domain.
    fn value(&self, tau: f64, w: &[f64], t: f64) -> Option<f64> {
        let mut v = tau * t;
        for &wk in w {
            let s = wk - self.eta;
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        for a in self.terms {
            let u = t - a.iter().zip(w).map(|(c, wk)| c / wk).sum::<f64>();
            if !(u > 0.0) {
                return None;
            }
            v -= u.ln();
        }
        Some(v)
    }

    /// Gradient and Hessian in `(w, t)`.
    fn derivatives(&self, tau: f64, w: &[f64], t: f64) -> (Vec<f64>, Matrix<f64>) {
        let n = self.n();
        let mut g = vec![0.0; n + 1];
        let mut h = Matrix::zeros(n + 1, n + 1);
        g[n] = tau;
        for k in 0..n {
            let s = w[k] - self.eta;
            g[k] -= 1.0 / s;
            h[(k, k)] += 1.0 / (s * s);
        }
        let mut du = vec![0.0; n + 1];
        for a in self.terms {
            let f: f64 = a.iter().zip(w).map(|(c, wk)| c / wk).sum();
            let u = t - f;
            // u = t - f(w): du/dw_k = a_k / w_k^2, du/dt = 1, d2u/dw_k^2 = -2 a_k / w_k^3
            for k in 0..n {
                du[k] = a[k] / (w[k] * w[k]);
            }
            du[n] = 1.0;
            for i in 0..=n {
                g[i] -= du[i] / u;
                if du[i] == 0.0 {
                    continue;
                }
                for j in 0..=n {
                    h[(i, j)] += du[i] * du[j] / (u * u);
                }
            }
            for k in 0..n {
                h[(k, k)] += 2.0 * a[k] / (w[k] * w[k] * w[k]) / u;
            }
        }
        (g, h)
    }

    fn solve(
        &self,
        w0: Vec<f64>,
        opts: &BarrierOptions,
    ) -> Result<(Vec<f64>, Vec<f64>, usize), QocbaError> {
        let n = self.n();
        let n_ineq = (n + self.terms.len()) as f64;
        let mut w = w0;
        let mut t = eval_f64(self.terms, &w) * 1.5 + 1e-3;
        let mut tau = opts.t0 * n_ineq / t.max(1e-300);
        let mut history = Vec::new();
        let mut steps = 0usize;
        let diag = |steps, t: f64, tau: f64, reason: &str| QocbaError::NotConverged {
            iterations: steps,
            objective: t,
            gap: n_ineq / tau,
            reason: reason.to_string(),
        };
        loop {
            // centering by equality-constrained Newton
            loop {
                if steps >= opts.max_newton {
                    return Err(diag(steps, t, tau, "Newton step budget exhausted"));
                }
                let (g, h) = self.derivatives(tau, &w, t);
                let step = self
                    .newton_step(&g, &h)
                    .ok_or_else(|| diag(steps, t, tau, "singular reduced Hessian"))?;
                let dx = &step[..];
                let decrement: f64 = -dx.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                steps += 1;
                if !(decrement.is_finite()) {
                    return Err(diag(steps, t, tau, "non-finite Newton decrement"));
                }
                if decrement / 2.0 <= 1e-11 {
                    break;
                }
                let f_cur = self.value(tau, &w, t).expect("iterate stays interior");
                let mut s = 1.0;
                let accepted = loop {
                    let wn: Vec<f64> = w.iter().zip(dx).map(|(a, b)| a + s * b).collect();
                    let tn = t + s * dx[n];
                    if let Some(fv) = self.value(tau, &wn, tn) {
                        if fv <= f_cur - 0.25 * s * decrement {
                            break Some((wn, tn));
                        }
                    }
                    s *= 0.5;
                    if s < 1e-14 {
                        break None;
                    }
                };
                match accepted {
                    Some((wn, tn)) => {
                        w = wn;
                        t = tn;
                    }
                    // no further decrease at this precision: the point is centred
                    None => break,
                }
            }
            history.push(t);
            let f = eval_f64(self.terms, &w);
            if n_ineq / tau <= opts.rel_tol * f * 0.5 {
                break;
            }
            tau *= opts.mu;
        }
        // undo drift of the equality rows accumulated in floating point
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);
        Ok((w, history, steps))
    }
}

/// Minimises the worst-case `Var(gap) / gap^2` over the polytope.
pub fn solve_qocba_allocation<T: Real>(
    coeffs: &CostCoefficients<T>,
    params: &MdpParams<T>,
    eta: T,
    opts: &BarrierOptions,
) -> Result<SolverOutcome<T>, QocbaError> {
    solve_minmax_allocation(&coeffs.objective_terms(), params, eta, opts)
}

/// Minimises the asymptotic variance of `chi* = rho^T V*`.
pub fn solve_chi_allocation<T: Real>(
    params: &MdpParams<T>,
    qc: &QCovariance<T>,
    rho: &[T],
    eta: T,
    opts: &BarrierOptions,
) -> Result<SolverOutcome<T>, QocbaError> {
    let c = chi_cost_coefficients(params, qc, rho)?;
    solve_minmax_allocation(&[c], params, eta, opts)
}

/// Which program picks the next-stage allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QocbaObjective {
    /// Maximise the smallest relative discrepancy `h_ij`.
    WorstDiscrepancy,
    /// Minimise the variance of `chi*`.
    ChiVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QocbaOptions {
    pub eta: f64,
    pub objective: QocbaObjective,
    pub barrier: BarrierOptions,
    /// Final estimates from all stages (`true`) or from the last one only.
    pub pool_stages: bool,
    /// Keep raw transition records in the returned dataset.
    pub keep_records: bool,
    pub inference: InferenceOptions<f64>,
}

impl Default for QocbaOptions {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            objective: QocbaObjective::WorstDiscrepancy,
            barrier: BarrierOptions::default(),
            pool_stages: true,
            keep_records: false,
            inference: InferenceOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QocbaOutcome<T> {
    pub data: TrajectoryDataset,
    pub empirical: EmpiricalModel<T>,
    pub q: QTable<T>,
    pub policy: Policy<T>,
    /// Covariance plugged in with the final estimates; `Err` if they do not
    /// support it (for instance a pair seen only in earlier stages).
    pub report: Result<CovarianceReport<T>, InferenceError>,
    /// Exploration policy of each stage.
    pub stage_policies: Vec<Policy<T>>,
}

/// Sequential Q-OCBA: stage 1 runs `pi0` for `batches[0]` steps; after
/// each of the first `k - 1` stages the plug-in model is re-estimated from
/// all data so far, the allocation program is re-solved and the next stage
/// follows `pi_w`. The trajectory is continuous across stages.
pub fn run_qocba<T: Real, R: Rng + ?Sized>(
    env: &TabularMdp<T>,
    k: usize,
    batches: &[usize],
    pi0: &Policy<T>,
    opts: &QocbaOptions,
    rng: &mut R,
) -> Result<QocbaOutcome<T>, QocbaError> {
    if k == 0 || batches.len() < k {
        return Err(QocbaError::InvalidArgument(format!(
            "need k >= 1 and at least k batches (k = {k}, {} given)",
            batches.len()
        )));
    }
    let (m_s, m_a) = (env.m_s(), env.m_a());
    let gamma = env.gamma();
    let inf_opts = InferenceOptions {
        tol: T::lit(opts.inference.tol),
        max_iter: opts.inference.max_iter,
        tie_tol: T::lit(opts.inference.tie_tol),
        force: true,
    };
    let sim = Simulator::new(env);
    let mut pooled = if opts.keep_records {
        TrajectoryDataset::new(m_s, m_a)
    } else {
        TrajectoryDataset::stats_only(m_s, m_a)
    };
    let mut policy = pi0.clone();
    let mut stage_policies = Vec::with_capacity(k);
    let mut last_stage = pooled.continuation();
    for stage in 0..k {
        let mut segment = pooled.continuation();
        sim.run(&policy, batches[stage], None, &mut segment, rng);
        pooled.merge(&segment);
        stage_policies.push(policy.clone());
        last_stage = segment;
        if stage + 1 == k {
            break;
        }
        let est: EmpiricalModel<T> = empirical_model(&pooled);
        if !est.unvisited.is_empty() {
            return Err(QocbaError::Unvisited(est.unvisited, stage + 1));
        }
        let params = est.params(gamma)?;
        let q = solve_q(&params, inf_opts.tol, inf_opts.max_iter)?;
        let qc = q_covariance_at(&params, &est.w_hat, q, &inf_opts)?;
        let outcome = match opts.objective {
            QocbaObjective::WorstDiscrepancy => {
                let cc = cost_coefficients_unchecked(&qc)?;
                solve_qocba_allocation(&cc, &params, T::lit(opts.eta), &opts.barrier)?
            }
            QocbaObjective::ChiVariance => {
                solve_chi_allocation(&params, &qc, env.rho(), T::lit(opts.eta), &opts.barrier)?
            }
        };
        policy = policy_from_allocation(&outcome.allocation.w, m_s, m_a)?;
    }
    let final_data = if opts.pool_stages {
        &pooled
    } else {
        &last_stage
    };
    let empirical: EmpiricalModel<T> = empirical_model(final_data);
    if !empirical.unvisited.is_empty() {
        return Err(QocbaError::Unvisited(empirical.unvisited, k));
    }
    let params = empirical.params(gamma)?;
    let q = solve_q(&params, inf_opts.tol, inf_opts.max_iter)?;
    let (greedy, _) = greedy_policy(&q, T::zero());
    let report = covariance_report(
        &params,
        &empirical.w_hat,
        env.rho(),
        PlugInSource::Empirical { n: final_data.n() },
        &inf_opts,
    );
    Ok(QocbaOutcome {
        data: pooled,
        empirical,
        q,
        policy: greedy,
        report,
        stage_policies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::inference::q_covariance;
    use crate::mdp::RewardSpec;

    fn one_state(m_a: usize) -> MdpParams<f64> {
        MdpParams {
            m_s: 1,
            m_a,
            gamma: 0.5,
            mu_r: vec![0.0; m_a],
            sigma2_r: vec![1.0; m_a],
            p: vec![1.0; m_a],
        }
    }

    #[test]
    fn allocation_policy_examples() {
        let pi = policy_from_allocation(&[0.6, 0.4], 1, 2).unwrap();
        assert_eq!(pi.as_slice(), &[0.6, 0.4]);
        let c = fixtures::fix_c();
        let pi = policy_from_allocation(&[0.5, 0.5], 2, 1).unwrap();
        assert_eq!(pi, Policy::uniform(2, 1));
        assert!(Allocation::new(c.params(), vec![0.5, 0.5], 1e-6).is_ok());
        assert!(Allocation::new(c.params(), vec![0.7, 0.3], 1e-6).is_err());
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let p = one_state(2);
        let out = solve_minmax_allocation(&[vec![1.0, 1.0]], &p, 1e-6, &BarrierOptions::default())
            .unwrap();
        assert!((out.allocation.w[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn two_coordinate_closed_form() {
        // minimise 4/w1 + 1/w2 on the simplex: w = (2/3, 1/3), value 9
        let p = one_state(2);
        let out = solve_minmax_allocation(&[vec![4.0, 1.0]], &p, 1e-6, &BarrierOptions::default())
            .unwrap();
        assert!((out.allocation.w[0] - 2.0 / 3.0).abs() < 1e-3);
        assert!((out.objective - 9.0) / 9.0 < 1e-4);
        assert!(out.history.windows(2).all(|h| h[1] <= h[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn zero_coefficients_and_infeasible_floor() {
        let p = one_state(2);
        let out = solve_minmax_allocation(&[vec![0.0, 0.0]], &p, 1e-6, &BarrierOptions::default())
            .unwrap();
        assert_eq!(out.objective, 0.0);
        let err = solve_minmax_allocation(&[vec![1.0, 1.0]], &p, 0.6, &BarrierOptions::default())
            .unwrap_err();
        assert!(matches!(err, QocbaError::Infeasible { .. }));
    }

    #[test]
    fn coefficients_vanish_without_noise() {
        let d = |value| RewardSpec::Deterministic { value };
        let m =
            TabularMdp::new(1, 2, 0.5, vec![d(1.0), d(0.0)], vec![1.0, 1.0], vec![1.0]).unwrap();
        let qc = q_covariance(m.params(), &[0.5, 0.5], &InferenceOptions::default()).unwrap();
        let cc = compute_cost_coefficients(&qc).unwrap();
        assert!(cc.c.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_state_two_actions_closed_form() {
        // one state, self loops: V* = Q(0,0) / 1 so P has no variance and
        // A = I + gamma/(1-gamma) * 1 e_0^T
        let g = |mean: f64, variance: f64| RewardSpec::Gaussian { mean, variance };
        let m = TabularMdp::new(
            1,
            2,
            0.5,
            vec![g(1.0, 2.0), g(0.0, 3.0)],
            vec![1.0, 1.0],
            vec![1.0],
        )
        .unwrap();
        let qc = q_covariance(m.params(), &[0.5, 0.5], &InferenceOptions::default()).unwrap();
        let cc = compute_cost_coefficients(&qc).unwrap();
        // row difference of A is (1, -1) scaled: d^T A = e0^T A - e1^T A = (1, -1)
        assert!((cc.c[0][0] - 2.0).abs() < 1e-12);
        assert!((cc.c[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn chi_allocation_single_pair() {
        let m = fixtures::fix_a(0.5);
        let qc = q_covariance(m.params(), &[1.0], &InferenceOptions::default()).unwrap();
        let out = solve_chi_allocation(m.params(), &qc, &[1.0], 1e-6, &BarrierOptions::default())
            .unwrap();
        assert_eq!(out.allocation.w, vec![1.0]);
    }

    #[test]
    fn qocba_single_stage_is_pure_pi0() {
        let m = fixtures::fix_d();
        let pi0 = Policy::uniform(3, 2);
        let mut rng = stream_rng(1, 0);
        let out = run_qocba(&m, 1, &[2000], &pi0, &QocbaOptions::default(), &mut rng).unwrap();
        assert_eq!(out.stage_policies, vec![pi0.clone()]);
        let direct = crate::estimation::collect_trajectory(&m, &pi0, 2000, 1, 0, None);
        assert_eq!(out.data.visits(), direct.visits());
    }
}
