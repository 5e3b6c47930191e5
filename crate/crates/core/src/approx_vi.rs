//! Approximate value iteration on a representative subset of states.
//!
//! Backups are computed only at the representative pairs and lifted back to
//! the full table by a linear generalization map `M_g`. The map shipped here
//! is 1-D linear interpolation over the state index; any other linear,
//! max-norm non-expansive map can be supplied through
//! [`GeneralizationMap::from_jacobian`].

use thiserror::Error;

use crate::estimation::EmpiricalModel;
use crate::inference::{check_unique_argmax, pair_noise, InferenceError, InferenceOptions};
use crate::linalg::Matrix;
use crate::mdp::{
    extended_transition, greedy_actions, residual_threshold, MdpError, MdpParams, Policy, QTable,
};
use crate::scalar::{max_abs_diff, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error("invalid representative set: {0}")]
    InvalidSet(String),
    #[error("invalid generalization map: {0}")]
    InvalidMap(String),
    #[error("approximate value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("assumption 5 violated: greedy action of Q^M not unique at states {0:?}")]
    NonUniqueArgmax(Vec<usize>),
    #[error("assumption 6 violated: {0}")]
    NonPositiveAllocation(String),
    #[error("representative pairs {0:?} were never visited")]
    Unvisited(Vec<usize>),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Ordered knot states, always containing `0` and `m_s - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepresentativeSet {
    m_s: usize,
    states: Vec<usize>,
}

impl RepresentativeSet {
    pub fn new(m_s: usize, states: Vec<usize>) -> Result<Self, ApproxError> {
        if m_s == 0 {
            return Err(ApproxError::InvalidSet("empty state space".into()));
        }
        if states.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ApproxError::InvalidSet(
                "states must be strictly increasing".into(),
            ));
        }
        if states.first() != Some(&0) || states.last() != Some(&(m_s - 1)) {
            return Err(ApproxError::InvalidSet(format!(
                "must contain both boundary states 0 and {}",
                m_s - 1
            )));
        }
        Ok(Self { m_s, states })
    }

    /// `{0, stride, 2 stride, ...}` plus the last state if the stride misses it.
    pub fn stride(m_s: usize, stride: usize) -> Result<Self, ApproxError> {
        if stride == 0 || m_s == 0 {
            return Err(ApproxError::InvalidSet(
                "stride and m_s must be positive".into(),
            ));
        }
        let mut states: Vec<usize> = (0..m_s).step_by(stride).collect();
        if *states.last().expect("non-empty") != m_s - 1 {
            states.push(m_s - 1);
        }
        Self::new(m_s, states)
    }

    /// Every state is a knot.
    pub fn full(m_s: usize) -> Self {
        Self {
            m_s,
            states: (0..m_s).collect(),
        }
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `I_S0`: flat indices of the representative pairs, knot-major.
    pub fn pair_indices(&self, m_a: usize) -> Vec<usize> {
        self.states
            .iter()
            .flat_map(|&s| (0..m_a).map(move |a| s * m_a + a))
            .collect()
    }
}

/// Linear lift from `N0` representative values to `N` pair values, held as
/// its (constant) Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationMap<T> {
    set: RepresentativeSet,
    m_a: usize,
    jacobian: Matrix<T>,
}

impl<T: Real> GeneralizationMap<T> {
    /// Any `N x N0` Jacobian with non-negative rows summing to one, unit
    /// rows at the knots.
    pub fn from_jacobian(
        set: RepresentativeSet,
        m_a: usize,
        jacobian: Matrix<T>,
    ) -> Result<Self, ApproxError> {
        let (n, n0) = (set.m_s() * m_a, set.len() * m_a);
        if jacobian.rows() != n || jacobian.cols() != n0 {
            return Err(ApproxError::InvalidMap(format!(
                "jacobian is {}x{}, expected {n}x{n0}",
                jacobian.rows(),
                jacobian.cols()
            )));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        for k in 0..n {
            let row = jacobian.row(k);
            if row.iter().any(|&x| x < T::zero()) {
                return Err(ApproxError::InvalidMap(format!(
                    "row {k} has a negative weight"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(ApproxError::InvalidMap(format!("row {k} sums to {sum}")));
            }
        }
        for (i, c) in set.pair_indices(m_a).into_iter().enumerate() {
            if (jacobian[(c, i)] - T::one()).abs() > tol {
                return Err(ApproxError::InvalidMap(format!(
                    "knot pair {c} is not reproduced exactly"
                )));
            }
        }
        Ok(Self { set, m_a, jacobian })
    }

    pub fn set(&self) -> &RepresentativeSet {
        &self.set
    }

    pub fn m_a(&self) -> usize {
        self.m_a
    }

    pub fn jacobian(&self) -> &Matrix<T> {
        &self.jacobian
    }

    /// `M_g(y)` for a knot-major vector `y` of length `N0`.
    pub fn apply(&self, y: &[T]) -> Vec<T> {
        self.jacobian.mul_vec(y)
    }
}

/// Linear interpolation in the state index: for `p < s < q` adjacent knots,
/// `Q(s,a) = (q-s)/(q-p) Q(p,a) + (s-p)/(q-p) Q(q,a)`.
pub fn interp_jacobian<T: Real>(
    m_s: usize,
    m_a: usize,
    set: &RepresentativeSet,
) -> Result<GeneralizationMap<T>, ApproxError> {
    if set.m_s() != m_s {
        return Err(ApproxError::InvalidSet(format!(
            "set is for {} states, model has {m_s}",
            set.m_s()
        )));
    }
    let knots = set.states();
    let mut j = Matrix::zeros(m_s * m_a, knots.len() * m_a);
    let mut seg = 0;
    for s in 0..m_s {
        while seg + 1 < knots.len() && knots[seg + 1] <= s {
            seg += 1;
        }
        if knots[seg] == s {
            for a in 0..m_a {
                j[(s * m_a + a, seg * m_a + a)] = T::one();
            }
            continue;
        }
        let (p, q) = (knots[seg], knots[seg + 1]);
        let span = T::lit((q - p) as f64);
        let lo = T::lit((q - s) as f64) / span;
        let hi = T::lit((s - p) as f64) / span;
        for a in 0..m_a {
            j[(s * m_a + a, seg * m_a + a)] = lo;
            j[(s * m_a + a, (seg + 1) * m_a + a)] = hi;
        }
    }
    GeneralizationMap::from_jacobian(set.clone(), m_a, j)
}

/// Fixed point `Q^M` of `M_g o M_I o T` and the reduced table
/// `Q^M_S0 = M_I T(Q^M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSolution<T> {
    pub q: QTable<T>,
    pub q_s0: Vec<T>,
    pub iterations: usize,
}

fn reduced_backup<T: Real>(params: &MdpParams<T>, pairs: &[usize], v: &[T]) -> Vec<T> {
    pairs
        .iter()
        .map(|&k| params.mu_r[k] + params.gamma * crate::scalar::dot(params.transition_row(k), v))
        .collect()
}

/// Iterates `Q <- M_g(M_I T(Q))` from zero. Only the representative rows of
/// `params` are read. Stops on the same residual rule as [`crate::mdp::solve_q`],
/// which is valid because the composed map is a `gamma`-contraction.
pub fn approx_solve_q<T: Real>(
    params: &MdpParams<T>,
    map: &GeneralizationMap<T>,
    tol: T,
    max_iter: usize,
) -> Result<ApproxSolution<T>, ApproxError> {
    check_shapes(params, map)?;
    if !(tol > T::zero()) {
        return Err(ApproxError::Mdp(MdpError::InvalidParameter(
            "tol must be positive".into(),
        )));
    }
    let pairs = map.set().pair_indices(params.m_a);
    let threshold = residual_threshold(params.gamma, tol);
    let mut q = QTable::zeros(params.m_s, params.m_a);
    let mut residual = T::infinity();
    for it in 1..=max_iter {
        let q_s0 = reduced_backup(params, &pairs, &q.state_values());
        let next = QTable::from_flat(params.m_s, params.m_a, map.apply(&q_s0))?;
        residual = max_abs_diff(next.as_slice(), q.as_slice());
        q = next;
        if residual <= threshold {
            let q_s0 = reduced_backup(params, &pairs, &q.state_values());
            return Ok(ApproxSolution {
                q,
                q_s0,
                iterations: it,
            });
        }
    }
    Err(ApproxError::NotConverged {
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}

fn check_shapes<T: Real>(
    params: &MdpParams<T>,
    map: &GeneralizationMap<T>,
) -> Result<(), ApproxError> {
    if map.set().m_s() != params.m_s || map.m_a() != params.m_a {
        return Err(ApproxError::InvalidMap(
            "map and model shapes differ".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxCovariance<T> {
    /// `Sigma^M_S0`, `N x N`.
    pub sigma: Matrix<T>,
    pub solution: ApproxSolution<T>,
    /// Greedy action of `Q^M` per state.
    pub actions: Vec<usize>,
    pub unique: bool,
}

impl<T: Real> ApproxCovariance<T> {
    /// Covariance of `V^M(s) = Q^M(s, a*(s))`.
    pub fn value_covariance(&self) -> Matrix<T> {
        let m_a = self.solution.q.m_a();
        let sel: Vec<usize> = self
            .actions
            .iter()
            .enumerate()
            .map(|(s, &a)| s * m_a + a)
            .collect();
        self.sigma.select(&sel, &sel)
    }
}

/// Asymptotic covariance of the plug-in `Q^M`:
///
/// `(I - gamma B P~_S0)^-1 B (W^S0)^-1 [D_R^S0 + D_Q^S0] B^T (..)^-T`
///
/// where `B` is the map Jacobian, `P~_S0` the representative rows of the
/// extended kernel under the greedy policy of `Q^M`, and `D_Q^S0` holds
/// `gamma^2 Var_{P_k}(V^M)`. `w` is indexed by all `N` pairs; only the
/// representative entries are read and they must be positive.
pub fn approx_q_covariance<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    map: &GeneralizationMap<T>,
    opts: &InferenceOptions<T>,
) -> Result<ApproxCovariance<T>, ApproxError> {
    check_shapes(params, map)?;
    let n = params.n_pairs();
    if w.len() != n {
        return Err(ApproxError::InvalidMap(format!(
            "allocation has {} entries, expected {n}",
            w.len()
        )));
    }
    let pairs = map.set().pair_indices(params.m_a);
    if let Some(&k) = pairs.iter().find(|&&k| !(w[k] > T::zero())) {
        return Err(ApproxError::NonPositiveAllocation(format!(
            "w[{k}] = {} at a representative pair",
            w[k]
        )));
    }
    let solution = approx_solve_q(params, map, opts.tol, opts.max_iter)?;
    let (actions, unique) = greedy_actions(&solution.q, opts.tie_tol);
    if !unique && !opts.force {
        let states = check_unique_argmax(&solution.q, opts.tie_tol)
            .iter()
            .map(|t| t.state)
            .collect();
        return Err(ApproxError::NonUniqueArgmax(states));
    }
    let policy = Policy::deterministic(params.m_a, &actions);
    let p_s0 = extended_transition(params, &policy)?.select_rows(&pairs);
    let b = map.jacobian();
    let lhs = Matrix::identity(n).sub(&b.matmul(&p_s0).scaled(params.gamma));
    let ab = lhs.lu().map_err(InferenceError::from)?.solve_matrix(b);
    let noise = pair_noise(params, &solution.q.state_values());
    let d: Vec<T> = pairs.iter().map(|&k| noise[k] / w[k]).collect();
    let mut sigma = ab.sandwich_diag(&d);
    sigma.symmetrize();
    Ok(ApproxCovariance {
        sigma,
        solution,
        actions,
        unique,
    })
}

/// Plug-in parameters for the approximate path: representative pairs must
/// be visited; other unvisited pairs (never read) get a zero reward and a
/// self loop.
pub fn representative_params<T: Real>(
    emp: &EmpiricalModel<T>,
    gamma: T,
    set: &RepresentativeSet,
) -> Result<MdpParams<T>, ApproxError> {
    let pairs = set.pair_indices(emp.m_a);
    let missing: Vec<usize> = emp
        .unvisited
        .iter()
        .copied()
        .filter(|k| pairs.contains(k))
        .collect();
    if !missing.is_empty() {
        return Err(ApproxError::Unvisited(missing));
    }
    Ok(emp.params_filled(gamma))
}
