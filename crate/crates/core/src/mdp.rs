//! Finite discounted MDPs: Bellman backups, value iteration, policy
//! evaluation, extended state-action kernels and their stationary laws.
//!
//! State-action pairs are flattened as `k = s * m_a + a` (0-based) everywhere:
//! Q-tables, reward vectors, allocations and covariance matrices all use it.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::scalar::{dot, max_abs_diff, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid probability data: {0}")]
    InvalidProbability(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("assumption 3 violated: {0}")]
    NotPositiveRecurrent(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Flat index of the pair `(s, a)`.
#[inline]
pub fn pair_index(m_a: usize, s: usize, a: usize) -> usize {
    s * m_a + a
}

/// Reward (or cost) distribution of one state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardSpec<T> {
    Deterministic {
        value: T,
    },
    Gaussian {
        mean: T,
        variance: T,
    },
    /// Takes value `scale` with probability `p`, else 0.
    Bernoulli {
        scale: T,
        p: T,
    },
}

impl<T: Real> RewardSpec<T> {
    pub fn mean(&self) -> T {
        match *self {
            RewardSpec::Deterministic { value } => value,
            RewardSpec::Gaussian { mean, .. } => mean,
            RewardSpec::Bernoulli { scale, p } => scale * p,
        }
    }

    pub fn variance(&self) -> T {
        match *self {
            RewardSpec::Deterministic { .. } => T::zero(),
            RewardSpec::Gaussian { variance, .. } => variance,
            RewardSpec::Bernoulli { scale, p } => scale * scale * p * (T::one() - p),
        }
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        match *self {
            RewardSpec::Deterministic { value } if !value.is_finite() => {
                Err(MdpError::InvalidParameter("non-finite reward".into()))
            }
            RewardSpec::Gaussian { mean, variance }
                if !mean.is_finite() || !(variance >= T::zero()) =>
            {
                Err(MdpError::InvalidParameter(format!(
                    "gaussian reward needs finite mean and variance >= 0, got ({mean}, {variance})"
                )))
            }
            RewardSpec::Bernoulli { scale, p }
                if !scale.is_finite() || !(p >= T::zero() && p <= T::one()) =>
            {
                Err(MdpError::InvalidParameter(format!(
                    "bernoulli reward needs p in [0,1], got p={p}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Draws one observation (in `f64`, the simulation precision).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardSpec::Deterministic { value } => value.as_f64(),
            RewardSpec::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean.as_f64() + variance.as_f64().sqrt() * z
            }
            RewardSpec::Bernoulli { scale, p } => {
                if rng.random::<f64>() < p.as_f64() {
                    scale.as_f64()
                } else {
                    0.0
                }
            }
        }
    }
}

/// The parameters every estimator and covariance formula consumes: mean
/// rewards, reward variances, the transition tensor and the discount.
///
/// `p[k * m_s + s']` is `P(s' | pair k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpParams<T> {
    pub m_s: usize,
    pub m_a: usize,
    pub gamma: T,
    pub mu_r: Vec<T>,
    pub sigma2_r: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> MdpParams<T> {
    #[inline]
    pub fn n_pairs(&self) -> usize {
        self.m_s * self.m_a
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        pair_index(self.m_a, s, a)
    }

    #[inline]
    pub fn transition_row(&self, k: usize) -> &[T] {
        &self.p[k * self.m_s..(k + 1) * self.m_s]
    }

    /// Checks shapes, `gamma` in (0,1), stochastic rows within `row_tol`
    /// and non-negative variances.
    pub fn validate(&self, row_tol: T) -> Result<(), MdpError> {
        if self.m_s == 0 || self.m_a == 0 {
            return Err(MdpError::Dimension("m_s and m_a must be positive".into()));
        }
        let n = self.n_pairs();
        if self.mu_r.len() != n || self.sigma2_r.len() != n || self.p.len() != n * self.m_s {
            return Err(MdpError::Dimension(format!(
                "expected {n} rewards/variances and {} transition entries",
                n * self.m_s
            )));
        }
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(MdpError::InvalidParameter(format!(
                "gamma must lie strictly inside (0,1), got {}",
                self.gamma
            )));
        }
        if let Some(k) = self.sigma2_r.iter().position(|&v| !(v >= T::zero())) {
            return Err(MdpError::InvalidParameter(format!(
                "negative reward variance at pair {k}"
            )));
        }
        if let Some(k) = self.mu_r.iter().position(|v| !v.is_finite()) {
            return Err(MdpError::InvalidParameter(format!(
                "non-finite mean reward at pair {k}"
            )));
        }
        for k in 0..n {
            check_distribution(self.transition_row(k), row_tol)
                .map_err(|e| MdpError::InvalidProbability(format!("transition row {k}: {e}")))?;
        }
        Ok(())
    }

    /// Largest `|mu_R|`, used for the `max|mu| / (1 - gamma)` bound.
    pub fn reward_bound(&self) -> T {
        self.mu_r.iter().fold(T::zero(), |m, &r| m.max(r.abs()))
    }
}

pub(crate) fn check_distribution<T: Real>(row: &[T], tol: T) -> Result<(), String> {
    if let Some(x) = row.iter().find(|&&x| !(x >= T::zero())) {
        return Err(format!("negative or NaN entry {x}"));
    }
    let sum: T = row.iter().copied().sum();
    if (sum - T::one()).abs() > tol {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Default tolerance for stochastic-row checks at precision `T`.
pub fn row_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

/// Ground-truth model: parameters plus reward families and the initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    params: MdpParams<T>,
    rewards: Vec<RewardSpec<T>>,
    rho: Vec<T>,
}

impl<T: Real> TabularMdp<T> {
    /// `rewards` and `transition` are indexed by flat pair index;
    /// `transition` has `m_s * m_a * m_s` entries.
    pub fn new(
        m_s: usize,
        m_a: usize,
        gamma: T,
        rewards: Vec<RewardSpec<T>>,
        transition: Vec<T>,
        rho: Vec<T>,
    ) -> Result<Self, MdpError> {
        for r in &rewards {
            r.validate()?;
        }
        let params = MdpParams {
            m_s,
            m_a,
            gamma,
            mu_r: rewards.iter().map(RewardSpec::mean).collect(),
            sigma2_r: rewards.iter().map(RewardSpec::variance).collect(),
            p: transition,
        };
        params.validate(row_tolerance())?;
        if rho.len() != m_s {
            return Err(MdpError::Dimension(format!(
                "rho has {} entries, expected {m_s}",
                rho.len()
            )));
        }
        check_distribution(&rho, row_tolerance())
            .map_err(|e| MdpError::InvalidProbability(format!("rho: {e}")))?;
        Ok(Self {
            params,
            rewards,
            rho,
        })
    }

    pub fn params(&self) -> &MdpParams<T> {
        &self.params
    }

    pub fn rewards(&self) -> &[RewardSpec<T>] {
        &self.rewards
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn m_s(&self) -> usize {
        self.params.m_s
    }

    pub fn m_a(&self) -> usize {
        self.params.m_a
    }

    pub fn gamma(&self) -> T {
        self.params.gamma
    }

    pub fn n_pairs(&self) -> usize {
        self.params.n_pairs()
    }

    /// Same dynamics with a different initial distribution.
    pub fn with_rho(mut self, rho: Vec<T>) -> Result<Self, MdpError> {
        if rho.len() != self.m_s() {
            return Err(MdpError::Dimension("rho length".into()));
        }
        check_distribution(&rho, row_tolerance())
            .map_err(|e| MdpError::InvalidProbability(format!("rho: {e}")))?;
        self.rho = rho;
        Ok(self)
    }
}

/// `m_s x m_a` table of Q-values, stored flat by pair index.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    m_s: usize,
    m_a: usize,
    values: Vec<T>,
}

impl<T: Real> QTable<T> {
    pub fn zeros(m_s: usize, m_a: usize) -> Self {
        Self {
            m_s,
            m_a,
            values: vec![T::zero(); m_s * m_a],
        }
    }

    pub fn from_flat(m_s: usize, m_a: usize, values: Vec<T>) -> Result<Self, MdpError> {
        if values.len() != m_s * m_a {
            return Err(MdpError::Dimension(format!(
                "Q-table needs {} entries, got {}",
                m_s * m_a,
                values.len()
            )));
        }
        Ok(Self { m_s, m_a, values })
    }

    pub fn constant(m_s: usize, m_a: usize, v: T) -> Self {
        Self {
            m_s,
            m_a,
            values: vec![v; m_s * m_a],
        }
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn m_a(&self) -> usize {
        self.m_a
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[pair_index(self.m_a, s, a)]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.m_a..(s + 1) * self.m_a]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> Vec<T> {
        (0..self.m_s)
            .map(|s| self.row(s).iter().copied().fold(T::neg_infinity(), T::max))
            .collect()
    }

    pub fn max_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Row-stochastic `m_s x m_a` matrix `pi(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    m_s: usize,
    m_a: usize,
    probs: Vec<T>,
}

impl<T: Real> Policy<T> {
    pub fn from_flat(m_s: usize, m_a: usize, probs: Vec<T>) -> Result<Self, MdpError> {
        if probs.len() != m_s * m_a {
            return Err(MdpError::Dimension(format!(
                "policy needs {} entries, got {}",
                m_s * m_a,
                probs.len()
            )));
        }
        for s in 0..m_s {
            check_distribution(
                &probs[s * m_a..(s + 1) * m_a],
                row_tolerance::<T>().max(T::lit(1e-12)),
            )
            .map_err(|e| MdpError::InvalidProbability(format!("policy row {s}: {e}")))?;
        }
        Ok(Self { m_s, m_a, probs })
    }

    pub fn uniform(m_s: usize, m_a: usize) -> Self {
        let p = T::one() / T::from_count(m_a);
        Self {
            m_s,
            m_a,
            probs: vec![p; m_s * m_a],
        }
    }

    pub fn deterministic(m_a: usize, actions: &[usize]) -> Self {
        let m_s = actions.len();
        let mut probs = vec![T::zero(); m_s * m_a];
        for (s, &a) in actions.iter().enumerate() {
            assert!(a < m_a, "action out of range");
            probs[pair_index(m_a, s, a)] = T::one();
        }
        Self { m_s, m_a, probs }
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn m_a(&self) -> usize {
        self.m_a
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[pair_index(self.m_a, s, a)]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.m_a..(s + 1) * self.m_a]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    /// Action taken at `s` if the row is a point mass.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        let support: Vec<usize> = (0..self.m_a).filter(|&a| row[a] > T::zero()).collect();
        match support.as_slice() {
            [a] => Some(*a),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.m_s).all(|s| self.deterministic_action(s).is_some())
    }
}

/// What a [`ValueVector`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRole {
    /// `V^pi` of a given policy.
    Policy,
    /// `V* = max_a Q`.
    Optimal,
    /// Discounted cost `L^pi`.
    Loss,
    /// `V^M` of an approximate fixed point.
    Approximate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector<T> {
    pub values: Vec<T>,
    pub role: ValueRole,
}

impl<T: Real> ValueVector<T> {
    pub fn new(values: Vec<T>, role: ValueRole) -> Self {
        Self { values, role }
    }

    pub fn optimal_from(q: &QTable<T>) -> Self {
        Self::new(q.state_values(), ValueRole::Optimal)
    }
}

fn check_q_dims<T: Real>(q: &QTable<T>, params: &MdpParams<T>) -> Result<(), MdpError> {
    if q.m_s != params.m_s || q.m_a != params.m_a {
        return Err(MdpError::Dimension(format!(
            "Q-table is {}x{}, model is {}x{}",
            q.m_s, q.m_a, params.m_s, params.m_a
        )));
    }
    Ok(())
}

fn check_policy_dims<T: Real>(pi: &Policy<T>, params: &MdpParams<T>) -> Result<(), MdpError> {
    if pi.m_s != params.m_s || pi.m_a != params.m_a {
        return Err(MdpError::Dimension(format!(
            "policy is {}x{}, model is {}x{}",
            pi.m_s, pi.m_a, params.m_s, params.m_a
        )));
    }
    Ok(())
}

/// One Bellman optimality backup:
/// `out(s,a) = mu_R(s,a) + gamma * sum_s' P(s'|s,a) max_a' q(s',a')`.
pub fn bellman_apply<T: Real>(q: &QTable<T>, params: &MdpParams<T>) -> Result<QTable<T>, MdpError> {
    check_q_dims(q, params)?;
    let v = q.state_values();
    Ok(backup_with_values(params, &v))
}

pub(crate) fn backup_with_values<T: Real>(params: &MdpParams<T>, v: &[T]) -> QTable<T> {
    let values = (0..params.n_pairs())
        .map(|k| params.mu_r[k] + params.gamma * dot(params.transition_row(k), v))
        .collect();
    QTable {
        m_s: params.m_s,
        m_a: params.m_a,
        values,
    }
}

/// Residual threshold on `||T Q - Q||_inf` that guarantees `||Q - Q*||_inf <= tol`.
pub(crate) fn residual_threshold<T: Real>(gamma: T, tol: T) -> T {
    let two = T::lit(2.0);
    tol * (T::one() - gamma) * T::one().min(T::one() / (two * gamma))
}

/// Value iteration from `Q = 0` to the optimal Q-table.
///
/// Stops once `||T Q - Q||_inf <= tol (1-gamma) min(1, 1/(2 gamma))`, which
/// bounds the distance to the fixed point by `tol`.
pub fn solve_q<T: Real>(
    params: &MdpParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<QTable<T>, MdpError> {
    if !(tol > T::zero()) {
        return Err(MdpError::InvalidParameter("tol must be positive".into()));
    }
    let threshold = residual_threshold(params.gamma, tol);
    let mut q = QTable::zeros(params.m_s, params.m_a);
    let mut residual = T::infinity();
    for _ in 0..max_iter {
        let next = backup_with_values(params, &q.state_values());
        residual = max_abs_diff(&next.values, &q.values);
        q = next;
        if residual <= threshold {
            return Ok(q);
        }
    }
    Err(MdpError::NotConverged {
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}

/// Greedy actions of `q`, lowest index on exact ties. The flag is `false`
/// when any row has a runner-up within `tie_tol` of its maximum.
pub fn greedy_actions<T: Real>(q: &QTable<T>, tie_tol: T) -> (Vec<usize>, bool) {
    let mut unique = true;
    let actions = (0..q.m_s)
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            let max = row[best];
            if row
                .iter()
                .enumerate()
                .any(|(a, &v)| a != best && max - v <= tie_tol)
            {
                unique = false;
            }
            best
        })
        .collect();
    (actions, unique)
}

/// Deterministic greedy policy plus the uniqueness flag.
pub fn greedy_policy<T: Real>(q: &QTable<T>, tie_tol: T) -> (Policy<T>, bool) {
    let (actions, unique) = greedy_actions(q, tie_tol);
    (Policy::deterministic(q.m_a, &actions), unique)
}

/// `P~(s',a' | s,a) = P(s'|s,a) pi(a'|s')` as an `N x N` matrix.
pub fn extended_transition<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<Matrix<T>, MdpError> {
    check_policy_dims(policy, params)?;
    let n = params.n_pairs();
    let m_a = params.m_a;
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let row = params.transition_row(k);
        for (s2, &p) in row.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            for a2 in 0..m_a {
                out[(k, pair_index(m_a, s2, a2))] = p * policy.prob(s2, a2);
            }
        }
    }
    Ok(out)
}

/// `P^pi(s, s') = sum_a pi(a|s) P(s'|s,a)`.
pub fn policy_transition<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<Matrix<T>, MdpError> {
    check_policy_dims(policy, params)?;
    let m_s = params.m_s;
    let mut out = Matrix::zeros(m_s, m_s);
    for s in 0..m_s {
        for a in 0..params.m_a {
            let pr = policy.prob(s, a);
            if pr == T::zero() {
                continue;
            }
            for (s2, &p) in params.transition_row(params.index(s, a)).iter().enumerate() {
                out[(s, s2)] += pr * p;
            }
        }
    }
    Ok(out)
}

/// `r^pi(s) = sum_a pi(a|s) r(s,a)` for any per-pair signal `r`.
pub fn policy_reward<T: Real>(m_a: usize, per_pair: &[T], policy: &Policy<T>) -> Vec<T> {
    (0..policy.m_s)
        .map(|s| dot(policy.row(s), &per_pair[s * m_a..(s + 1) * m_a]))
        .collect()
}

/// Stationary law `w` of a row-stochastic matrix, from the balance
/// equations with the last one replaced by `sum w = 1`.
///
/// Fails unless the solution exists and is strictly positive.
pub fn stationary_distribution<T: Real>(p_tilde: &Matrix<T>) -> Result<Vec<T>, MdpError> {
    if !p_tilde.is_square() {
        return Err(MdpError::Dimension(
            "stationary_distribution needs a square matrix".into(),
        ));
    }
    let n = p_tilde.rows();
    // Rows of the system are columns of (P^T - I).
    let mut a = Matrix::from_fn(n, n, |i, j| {
        let v = p_tilde[(j, i)];
        if i == j {
            v - T::one()
        } else {
            v
        }
    });
    for j in 0..n {
        a[(n - 1, j)] = T::one();
    }
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let lu = a
        .lu()
        .map_err(|e| MdpError::NotPositiveRecurrent(format!("balance system singular ({e})")))?;
    let w = lu.solve(&rhs);
    let floor = T::epsilon() * T::lit(16.0);
    if let Some(k) = w.iter().position(|&x| !(x > floor)) {
        return Err(MdpError::NotPositiveRecurrent(format!(
            "stationary mass {} at index {k} is not positive",
            w[k]
        )));
    }
    Ok(w)
}

/// Solves `(I - gamma P^pi) V = r^pi` for an arbitrary per-pair signal.
pub fn policy_value_for<T: Real>(
    params: &MdpParams<T>,
    per_pair: &[T],
    policy: &Policy<T>,
    role: ValueRole,
) -> Result<ValueVector<T>, MdpError> {
    if per_pair.len() != params.n_pairs() {
        return Err(MdpError::Dimension("per-pair signal length".into()));
    }
    let p_pi = policy_transition(params, policy)?;
    let r_pi = policy_reward(params.m_a, per_pair, policy);
    let a = Matrix::identity(params.m_s).sub(&p_pi.scaled(params.gamma));
    let v = a.lu()?.solve(&r_pi);
    Ok(ValueVector::new(v, role))
}

/// `V^pi` of a (possibly stochastic) policy under the mean rewards.
pub fn policy_value<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<ValueVector<T>, MdpError> {
    policy_value_for(params, &params.mu_r, policy, ValueRole::Policy)
}

/// `chi = sum_s rho(s) V(s)`.
pub fn chi<T: Real>(v: &ValueVector<T>, rho: &[T]) -> Result<T, MdpError> {
    if v.values.len() != rho.len() {
        return Err(MdpError::Dimension(format!(
            "value has {} states, rho has {}",
            v.values.len(),
            rho.len()
        )));
    }
    Ok(dot(&v.values, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn bellman_on_single_pair() {
        let m = fixtures::fix_a(0.5);
        let q0 = QTable::zeros(1, 1);
        assert_eq!(bellman_apply(&q0, m.params()).unwrap().get(0, 0), 1.0);
        let q2 = QTable::constant(1, 1, 2.0);
        assert_eq!(bellman_apply(&q2, m.params()).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn bellman_rejects_wrong_shape() {
        let m = fixtures::fix_a(0.5);
        let q = QTable::<f64>::zeros(2, 1);
        assert!(matches!(
            bellman_apply(&q, m.params()),
            Err(MdpError::Dimension(_))
        ));
    }

    #[test]
    fn solve_q_geometric_series() {
        let m = fixtures::fix_a(0.5);
        let q = solve_q(m.params(), 1e-10, 10_000).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-10);
        let m = fixtures::fix_a(0.95);
        let q = solve_q(m.params(), 1e-10, 10_000).unwrap();
        assert!((q.get(0, 0) - 20.0).abs() < 1e-10);
    }

    #[test]
    fn solve_q_reports_last_residual() {
        let m = fixtures::fix_a(0.95);
        match solve_q(m.params(), 1e-10, 3) {
            Err(MdpError::NotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert_relative_eq!(residual, 0.95f64.powi(2), epsilon = 1e-12);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn solve_q_in_single_precision() {
        let m = fixtures::fix_a_generic::<f32>(0.5);
        let q = solve_q(m.params(), 1e-4, 1000).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn greedy_examples() {
        let q = QTable::from_flat(1, 2, vec![1.0, 2.0]).unwrap();
        let (pi, unique) = greedy_policy(&q, 1e-6);
        assert_eq!(pi.deterministic_action(0), Some(1));
        assert!(unique);
        let q = QTable::from_flat(1, 2, vec![2.0, 2.0]).unwrap();
        let (pi, unique) = greedy_policy(&q, 1e-6);
        assert_eq!(pi.deterministic_action(0), Some(0));
        assert!(!unique);
    }

    #[test]
    fn extended_transition_examples() {
        let a = fixtures::fix_a(0.5);
        let pt = extended_transition(a.params(), &Policy::uniform(1, 1)).unwrap();
        assert_eq!(pt.as_slice(), &[1.0]);

        let c = fixtures::fix_c();
        let pt = extended_transition(c.params(), &Policy::uniform(2, 1)).unwrap();
        assert_eq!(pt.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn stationary_examples() {
        let c = fixtures::fix_c();
        let pt = extended_transition(c.params(), &Policy::uniform(2, 1)).unwrap();
        let w = stationary_distribution(&pt).unwrap();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-14);
        let w = stationary_distribution(&Matrix::<f64>::identity(1)).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn stationary_rejects_reducible_chain() {
        // Two absorbing states: balance system is singular.
        let p = Matrix::<f64>::identity(2);
        assert!(matches!(
            stationary_distribution(&p),
            Err(MdpError::NotPositiveRecurrent(_))
        ));
        // One transient state: unique law but not positive everywhere.
        let p = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(
            stationary_distribution(&p),
            Err(MdpError::NotPositiveRecurrent(_))
        ));
    }

    #[test]
    fn policy_value_and_chi() {
        let a = fixtures::fix_a(0.5);
        let v = policy_value(a.params(), &Policy::uniform(1, 1)).unwrap();
        assert_relative_eq!(v.values[0], 2.0, epsilon = 1e-14);
        assert_eq!(chi(&v, &[1.0]).unwrap(), 2.0);
        let v = ValueVector::new(vec![1.0, 3.0], ValueRole::Policy);
        assert_eq!(chi(&v, &[0.5, 0.5]).unwrap(), 2.0);
        assert!(chi(&v, &[1.0]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_rows_and_gamma() {
        let r = vec![RewardSpec::Deterministic { value: 1.0 }];
        assert!(TabularMdp::new(1, 1, 0.5, r.clone(), vec![0.9], vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, 1.0, r.clone(), vec![1.0], vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, 0.5, r.clone(), vec![1.0], vec![0.5]).is_err());
        let bad = vec![RewardSpec::Gaussian {
            mean: 0.0,
            variance: -1.0,
        }];
        assert!(TabularMdp::new(1, 1, 0.5, bad, vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn reward_moments() {
        let b = RewardSpec::Bernoulli {
            scale: 4.0,
            p: 0.25,
        };
        assert_eq!(b.mean(), 1.0);
        assert_eq!(b.variance(), 16.0 * 0.25 * 0.75);
        let g = RewardSpec::Gaussian {
            mean: 1.0,
            variance: 2.0,
        };
        assert_eq!((g.mean(), g.variance()), (1.0, 2.0));
    }
}
