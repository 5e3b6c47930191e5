//! Single-constraint discounted MDPs: the occupancy-measure LP, split-policy
//! extraction and the asymptotic covariance of the constrained optimal value.
//!
//! The LP is
//!
//! ```text
//! max  sum mu_R(s,a) x(s,a)
//! s.t. sum_a x(s,a) - gamma sum_{s',a} P(s|s',a) x(s',a) = rho(s)   for all s
//!      sum mu_C(s,a) x(s,a) <= budget
//!      x >= 0
//! ```
//!
//! with `x` the unnormalized discounted occupancy, so the objective is
//! `rho^T V^pi` and the cost row is `rho^T L^pi` directly.

use thiserror::Error;

use crate::estimation::{multinomial_cov, EmpiricalModel, EstimationError};
use crate::inference::{fixed_policy_covariance, state_resolvent, InferenceError};
use crate::linalg::Matrix;
use crate::lp::{solve_lp, LinearProgram, LpError};
use crate::mdp::{
    policy_value_for, MdpError, MdpParams, Policy, RewardSpec, TabularMdp, ValueRole,
};
use crate::scalar::{dot, Real};

/// Occupancy entries below this are treated as zero.
pub const OCCUPANCY_ZERO: f64 = 1e-10;
/// Tolerance of the binding test on the budget row.
pub const BINDING_TOL: f64 = 1e-8;
/// Smallest admissible `|rho^T X q_L|`.
pub const MIXING_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConstrainedError {
    #[error("no feasible policy meets the budget {0}")]
    Infeasible(f64),
    #[error("degenerate LP, unique-split assumptions violated: {0}")]
    Degenerate(String),
    #[error("mixing sensitivity degenerate: |rho^T X q_L| = {0:e}")]
    MixingDegenerate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lp(LpError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Ground-truth constrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedMdp<T> {
    pub base: TabularMdp<T>,
    pub costs: Vec<RewardSpec<T>>,
    /// `+inf` means unconstrained.
    pub budget: T,
}

impl<T: Real> ConstrainedMdp<T> {
    pub fn new(
        base: TabularMdp<T>,
        costs: Vec<RewardSpec<T>>,
        budget: T,
    ) -> Result<Self, ConstrainedError> {
        if costs.len() != base.n_pairs() {
            return Err(ConstrainedError::InvalidArgument(format!(
                "{} cost specs for {} pairs",
                costs.len(),
                base.n_pairs()
            )));
        }
        for c in &costs {
            c.validate()?;
        }
        if budget.is_nan() {
            return Err(ConstrainedError::InvalidArgument("budget is NaN".into()));
        }
        Ok(Self {
            base,
            costs,
            budget,
        })
    }

    pub fn with_budget(mut self, budget: T) -> Self {
        self.budget = budget;
        self
    }

    pub fn params(&self) -> ConstrainedParams<T> {
        ConstrainedParams {
            base: self.base.params().clone(),
            mu_c: self.costs.iter().map(RewardSpec::mean).collect(),
            sigma2_c: self.costs.iter().map(RewardSpec::variance).collect(),
            rho: self.base.rho().to_vec(),
            budget: self.budget,
        }
    }
}

/// Everything the LP and the covariance formula read: either the true
/// moments or plug-in estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedParams<T> {
    pub base: MdpParams<T>,
    pub mu_c: Vec<T>,
    pub sigma2_c: Vec<T>,
    pub rho: Vec<T>,
    pub budget: T,
}

impl<T: Real> ConstrainedParams<T> {
    /// Plug-in parameters; needs every pair visited and cost observations.
    pub fn from_empirical(
        emp: &EmpiricalModel<T>,
        gamma: T,
        rho: &[T],
        budget: T,
    ) -> Result<Self, ConstrainedError> {
        let base = emp.params(gamma)?;
        let mu_c = emp.cost_means()?.to_vec();
        let sigma2_c = emp.sigma2_c_hat.clone().ok_or(EstimationError::NoCosts)?;
        Ok(Self {
            base,
            mu_c,
            sigma2_c,
            rho: rho.to_vec(),
            budget,
        })
    }

    fn check(&self) -> Result<(), ConstrainedError> {
        let n = self.base.n_pairs();
        if self.mu_c.len() != n || self.sigma2_c.len() != n || self.rho.len() != self.base.m_s {
            return Err(ConstrainedError::InvalidArgument(
                "cost or rho length".into(),
            ));
        }
        if self.sigma2_c.iter().any(|v| !(*v >= T::zero())) {
            return Err(ConstrainedError::InvalidArgument(
                "negative cost variance".into(),
            ));
        }
        Ok(())
    }

    /// `L^pi`, the discounted expected cost of `policy`.
    pub fn cost_value(&self, policy: &Policy<T>) -> Result<Vec<T>, ConstrainedError> {
        Ok(policy_value_for(&self.base, &self.mu_c, policy, ValueRole::Loss)?.values)
    }

    /// `V^pi` under the mean rewards.
    pub fn reward_value(&self, policy: &Policy<T>) -> Result<Vec<T>, ConstrainedError> {
        Ok(policy_value_for(&self.base, &self.base.mu_r, policy, ValueRole::Policy)?.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySolution<T> {
    pub x: Vec<T>,
    /// Basic structural variables, ascending.
    pub basis: Vec<usize>,
    /// Whether the budget row holds with equality.
    pub binding: bool,
    pub objective: T,
    /// `sum mu_C x`.
    pub cost: T,
}

/// Solves the occupancy LP. An infinite budget drops the cost row.
pub fn occupancy_lp<T: Real>(
    cp: &ConstrainedParams<T>,
) -> Result<OccupancySolution<T>, ConstrainedError> {
    cp.check()?;
    let p = &cp.base;
    let (m_s, n) = (p.m_s, p.n_pairs());
    let mut lp = LinearProgram::maximize(p.mu_r.clone());
    for s in 0..m_s {
        let mut row = vec![T::zero(); n];
        for s2 in 0..m_s {
            for a in 0..p.m_a {
                let k = p.index(s2, a);
                row[k] -= p.gamma * p.transition_row(k)[s];
            }
        }
        for a in 0..p.m_a {
            row[p.index(s, a)] += T::one();
        }
        lp = lp.eq(row, cp.rho[s]);
    }
    let constrained = cp.budget.is_finite();
    if constrained {
        lp = lp.le(cp.mu_c.clone(), cp.budget);
    }
    let sol = solve_lp(&lp).map_err(|e| match e {
        LpError::Infeasible => ConstrainedError::Infeasible(cp.budget.as_f64()),
        other => ConstrainedError::Lp(other),
    })?;
    let cost = dot(&cp.mu_c, &sol.x);
    let binding = constrained
        && (cost - cp.budget).abs() <= T::lit(BINDING_TOL) * T::one().max(cp.budget.abs());
    Ok(OccupancySolution {
        x: sol.x,
        basis: sol.basis,
        binding,
        objective: sol.objective,
        cost,
    })
}

/// A policy that is deterministic except possibly at `s_r`, where it plays
/// `a1` with probability `alpha` and `a2` otherwise (`a1 < a2`).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPolicy<T> {
    pub policy: Policy<T>,
    pub s_r: Option<usize>,
    pub a1: Option<usize>,
    pub a2: Option<usize>,
    pub alpha: Option<T>,
}

impl<T: Real> SplitPolicy<T> {
    pub fn is_split(&self) -> bool {
        self.s_r.is_some()
    }
}

/// `pi(a|s) = x(s,a) / sum_a x(s,a)` with entries below [`OCCUPANCY_ZERO`]
/// dropped.
pub fn split_policy_from_occupancy<T: Real>(
    x: &[T],
    m_s: usize,
    m_a: usize,
) -> Result<SplitPolicy<T>, ConstrainedError> {
    if x.len() != m_s * m_a {
        return Err(ConstrainedError::InvalidArgument("occupancy length".into()));
    }
    let zero = T::lit(OCCUPANCY_ZERO);
    let mut probs = vec![T::zero(); m_s * m_a];
    let mut split = None;
    for s in 0..m_s {
        let row = &x[s * m_a..(s + 1) * m_a];
        let support: Vec<usize> = (0..m_a).filter(|&a| row[a] >= zero).collect();
        let mass: T = support.iter().map(|&a| row[a]).sum();
        if support.is_empty() {
            return Err(ConstrainedError::InvalidArgument(format!(
                "state {s} has no occupancy mass"
            )));
        }
        for &a in &support {
            probs[s * m_a + a] = row[a] / mass;
        }
        match support.len() {
            1 => {}
            2 => {
                if let Some((prev, _, _)) = split {
                    return Err(ConstrainedError::Degenerate(format!(
                        "states {prev} and {s} both randomize"
                    )));
                }
                split = Some((s, support[0], support[1]));
            }
            more => {
                return Err(ConstrainedError::Degenerate(format!(
                    "state {s} randomizes over {more} actions"
                )));
            }
        }
    }
    let alpha = split.map(|(s, a1, _)| probs[s * m_a + a1]);
    Ok(SplitPolicy {
        policy: Policy::from_flat(m_s, m_a, probs)?,
        s_r: split.map(|t| t.0),
        a1: split.map(|t| t.1),
        a2: split.map(|t| t.2),
        alpha,
    })
}

/// Asymptotic covariance of the constrained optimal value `V*` when data
/// arrive with stationary pair frequencies `w`.
///
/// Without a randomized state this is [`fixed_policy_covariance`] of the
/// deterministic optimum. With one, it is `J D J^T` where
/// `J = X[G, 0, H_V] - X q_V rho^T X [0, G, H_L] / (rho^T X q_L)`,
/// `X = (I - gamma P^pi)^-1` and
/// `D = diag(sigma2_R / w, sigma2_C / w, Cov(P_k) / w_k)`.
pub fn constrained_value_covariance<T: Real>(
    cp: &ConstrainedParams<T>,
    split: &SplitPolicy<T>,
    w: &[T],
) -> Result<Matrix<T>, ConstrainedError> {
    cp.check()?;
    let p = &cp.base;
    let (m_s, m_a) = (p.m_s, p.m_a);
    if w.len() != p.n_pairs() {
        return Err(ConstrainedError::InvalidArgument(
            "allocation length".into(),
        ));
    }
    let (s_r, a1, a2) = match (split.s_r, split.a1, split.a2) {
        (Some(s), Some(a1), Some(a2)) => (s, a1, a2),
        _ => return Ok(fixed_policy_covariance(p, w, &split.policy)?),
    };
    let pi = &split.policy;
    for k in 0..p.n_pairs() {
        if pi.prob(k / m_a, k % m_a) > T::zero() && !(w[k] > T::zero()) {
            return Err(InferenceError::NonPositiveAllocation(format!(
                "w[{k}] = {} on a pair the policy uses",
                w[k]
            ))
            .into());
        }
    }
    let x = state_resolvent(p, pi)?;
    let v = cp.reward_value(pi)?;
    let l = cp.cost_value(pi)?;

    let (k1, k2) = (p.index(s_r, a1), p.index(s_r, a2));
    let drift = |mu: &[T], val: &[T]| {
        let dp: T = (0..m_s)
            .map(|j| val[j] * (p.transition_row(k1)[j] - p.transition_row(k2)[j]))
            .sum();
        mu[k1] - mu[k2] + p.gamma * dp
    };
    let q_v = drift(&p.mu_r, &v);
    let q_l = drift(&cp.mu_c, &l);
    // q_V and q_L live only at s_r, so X q = q(s_r) X[:, s_r].
    let u: Vec<T> = (0..m_s).map(|i| x[(i, s_r)] * q_v).collect();
    let r = x.vec_mul(&cp.rho);
    let denom = r[s_r] * q_l;
    if denom.abs() < T::lit(MIXING_TOL) {
        return Err(ConstrainedError::MixingDegenerate(denom.as_f64()));
    }

    let mut sigma = Matrix::zeros(m_s, m_s);
    let mut add_outer = |a: &[T], b: &[T], scale: T| {
        for i in 0..m_s {
            for j in 0..m_s {
                sigma[(i, j)] += scale * a[i] * b[j];
            }
        }
    };
    for s in 0..m_s {
        // columns of J for pair (s, a): reward part a_col, cost part b_col
        let a_col: Vec<T> = (0..m_s).map(|i| x[(i, s)]).collect();
        let b_col: Vec<T> = u.iter().map(|&ui| ui * r[s] / denom).collect();
        for a in 0..m_a {
            let pr = pi.prob(s, a);
            if pr == T::zero() {
                continue;
            }
            let k = p.index(s, a);
            let inv_w = T::one() / w[k];
            add_outer(&a_col, &a_col, pr * pr * p.sigma2_r[k] * inv_w);
            add_outer(&b_col, &b_col, pr * pr * cp.sigma2_c[k] * inv_w);
            let cov = multinomial_cov(p.transition_row(k));
            let cv = cov.mul_vec(&v);
            let cl = cov.mul_vec(&l);
            let (vv, vl, ll) = (dot(&v, &cv), dot(&v, &cl), dot(&l, &cl));
            let g = p.gamma * p.gamma * pr * pr * inv_w;
            add_outer(&a_col, &a_col, g * vv);
            add_outer(&a_col, &b_col, -g * vl);
            add_outer(&b_col, &a_col, -g * vl);
            add_outer(&b_col, &b_col, g * ll);
        }
    }
    sigma.symmetrize();
    Ok(sigma)
}

/// Optimal value vector of the constrained problem (`V^pi*` of the split
/// policy) together with the LP solution and the policy.
pub fn solve_constrained<T: Real>(
    cp: &ConstrainedParams<T>,
) -> Result<(OccupancySolution<T>, SplitPolicy<T>, Vec<T>), ConstrainedError> {
    let occ = occupancy_lp(cp)?;
    let split = split_policy_from_occupancy(&occ.x, cp.base.m_s, cp.base.m_a)?;
    let v = cp.reward_value(&split.policy)?;
    Ok((occ, split, v))
}
