//! Closed-form asymptotic covariances of plug-in Q-values and values, and
//! the normal confidence intervals built from them.
//!
//! With data collected under a policy whose state-action stationary law is
//! `w`, the estimate `Q_n` of the optimal Q-table satisfies
//! `sqrt(n) (Q_n - Q) => N(0, Sigma)` with
//!
//! ```text
//! Sigma = A diag((sigma2_R + gamma^2 Var_P(V*)) / w) A^T,   A = (I - gamma P~)^-1
//! ```
//!
//! where `P~` is the state-action kernel of the greedy policy of `Q`.

use std::fmt::Write as _;
use std::io::BufRead;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::estimation::multinomial_quadratic;
use crate::linalg::{LinalgError, Matrix};
use crate::mdp::{
    extended_transition, greedy_actions, policy_transition, policy_value, solve_q, MdpError,
    MdpParams, Policy, QTable, ValueVector,
};
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("assumption 2 violated: greedy action not unique at states {0:?}")]
    NonUniqueArgmax(Vec<usize>),
    #[error("assumption 3 violated: {0}")]
    NonPositiveAllocation(String),
    #[error("estimates missing for unvisited pairs {0:?}")]
    Unvisited(Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("covariance identities disagree by {0:e}")]
    Inconsistent(f64),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Solver and diagnostic settings shared by the covariance routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions<T> {
    /// Accuracy of the value-iteration solve of `Q`.
    pub tol: T,
    pub max_iter: usize,
    /// Runner-up actions within this gap count as ties.
    pub tie_tol: T,
    /// Proceed with the lowest-index greedy action when ties are found.
    pub force: bool,
}

impl<T: Real> Default for InferenceOptions<T> {
    fn default() -> Self {
        let tol = if T::epsilon() < T::lit(1e-10) {
            T::lit(1e-10)
        } else {
            T::epsilon().sqrt()
        };
        Self {
            tol,
            max_iter: 1_000_000,
            tie_tol: T::lit(1e-9),
            force: false,
        }
    }
}

impl<T: Real> InferenceOptions<T> {
    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }
}

/// Where the plugged-in parameters came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlugInSource {
    True,
    Empirical { n: u64 },
}

/// A greedy row whose runner-up is within tolerance of the best action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearTie<T> {
    pub state: usize,
    pub best: usize,
    pub runner_up: usize,
    pub gap: T,
}

/// Rows of `q` whose top-two gap is below `tol`.
pub fn check_unique_argmax<T: Real>(q: &QTable<T>, tol: T) -> Vec<NearTie<T>> {
    let (best, _) = greedy_actions(q, T::zero());
    let mut out = Vec::new();
    for (s, &b) in best.iter().enumerate() {
        let row = q.row(s);
        let runner = (0..row.len()).filter(|&a| a != b).max_by(|&x, &y| {
            row[x]
                .partial_cmp(&row[y])
                .expect("finite Q")
                .then(y.cmp(&x))
        });
        if let Some(r) = runner {
            let gap = row[b] - row[r];
            if gap < tol {
                out.push(NearTie {
                    state: s,
                    best: b,
                    runner_up: r,
                    gap,
                });
            }
        }
    }
    out
}

fn check_allocation<T: Real>(w: &[T], n: usize) -> Result<(), InferenceError> {
    if w.len() != n {
        return Err(InferenceError::InvalidArgument(format!(
            "allocation has {} entries, expected {n}",
            w.len()
        )));
    }
    if let Some(k) = w.iter().position(|&x| !(x > T::zero())) {
        return Err(InferenceError::NonPositiveAllocation(format!(
            "w[{k}] = {} is not positive",
            w[k]
        )));
    }
    Ok(())
}

/// Delta-method covariance of the Q estimate together with the pieces other modules reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct QCovariance<T> {
    /// `Sigma`, `N x N`.
    pub sigma: Matrix<T>,
    pub q: QTable<T>,
    pub v_star: ValueVector<T>,
    /// Greedy action per state.
    pub actions: Vec<usize>,
    pub unique: bool,
    /// `A = (I - gamma P~)^-1` under the greedy policy.
    pub resolvent: Matrix<T>,
    /// Per-pair noise `sigma2_R(k) + gamma^2 Var_{P_k}(V*)`.
    pub noise: Vec<T>,
}

impl<T: Real> QCovariance<T> {
    pub fn optimal_pairs(&self) -> Vec<usize> {
        let m_a = self.q.m_a();
        self.actions
            .iter()
            .enumerate()
            .map(|(s, &a)| s * m_a + a)
            .collect()
    }
}

/// Solves for `Q` and returns its asymptotic covariance under allocation `w`.
pub fn q_covariance<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    opts: &InferenceOptions<T>,
) -> Result<QCovariance<T>, InferenceError> {
    check_allocation(w, params.n_pairs())?;
    let q = solve_q(params, opts.tol, opts.max_iter)?;
    q_covariance_at(params, w, q, opts)
}

/// As [`q_covariance`] for an already solved `Q`.
pub fn q_covariance_at<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    q: QTable<T>,
    opts: &InferenceOptions<T>,
) -> Result<QCovariance<T>, InferenceError> {
    check_allocation(w, params.n_pairs())?;
    let (actions, unique) = greedy_actions(&q, opts.tie_tol);
    if !unique && !opts.force {
        let states = check_unique_argmax(&q, opts.tie_tol)
            .iter()
            .map(|t| t.state)
            .collect();
        return Err(InferenceError::NonUniqueArgmax(states));
    }
    let policy = Policy::deterministic(params.m_a, &actions);
    let v_star = ValueVector::optimal_from(&q);
    let resolvent = resolvent(params, &policy)?;
    let noise = pair_noise(params, &v_star.values);
    let d: Vec<T> = noise.iter().zip(w).map(|(&x, &wk)| x / wk).collect();
    let mut sigma = resolvent.sandwich_diag(&d);
    sigma.symmetrize();
    Ok(QCovariance {
        sigma,
        q,
        v_star,
        actions,
        unique,
        resolvent,
        noise,
    })
}

/// `(I - gamma P~^pi)^-1` on state-action pairs.
pub fn resolvent<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<Matrix<T>, InferenceError> {
    let pt = extended_transition(params, policy)?;
    let a = Matrix::identity(params.n_pairs()).sub(&pt.scaled(params.gamma));
    Ok(a.lu()?.inverse())
}

/// `sigma2_R(k) + gamma^2 Var_{P_k}(v)` for every pair.
pub fn pair_noise<T: Real>(params: &MdpParams<T>, v: &[T]) -> Vec<T> {
    let g2 = params.gamma * params.gamma;
    (0..params.n_pairs())
        .map(|k| params.sigma2_r[k] + g2 * multinomial_quadratic(params.transition_row(k), v))
        .collect()
}

/// Covariance of `V*` and the variance of `chi* = rho^T V*`.
#[derive(Debug, Clone, PartialEq)]
pub struct VCovariance<T> {
    pub sigma_v: Matrix<T>,
    pub sigma_chi: T,
}

/// `Sigma_V = X (W^pi*)^-1 [D_R^pi* + D_V^pi*] X^T` with `X = (I - gamma P^pi*)^-1`,
/// checked against the optimal-pair sub-block of `qc.sigma`.
pub fn v_covariance<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    qc: &QCovariance<T>,
    rho: &[T],
) -> Result<VCovariance<T>, InferenceError> {
    check_allocation(w, params.n_pairs())?;
    if rho.len() != params.m_s {
        return Err(InferenceError::InvalidArgument("rho length".into()));
    }
    let policy = Policy::deterministic(params.m_a, &qc.actions);
    let x = state_resolvent(params, &policy)?;
    let sel = qc.optimal_pairs();
    let d: Vec<T> = sel.iter().map(|&k| qc.noise[k] / w[k]).collect();
    let mut sigma_v = x.sandwich_diag(&d);
    sigma_v.symmetrize();

    let via_selection = qc.sigma.select(&sel, &sel);
    let scale = T::one().max(sigma_v.max_abs());
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e4));
    let gap = sigma_v.sub(&via_selection).max_abs();
    if gap > tol * scale {
        return Err(InferenceError::Inconsistent(gap.as_f64()));
    }
    let sigma_chi = dot(rho, &sigma_v.mul_vec(rho)).max(T::zero());
    Ok(VCovariance { sigma_v, sigma_chi })
}

/// `(I - gamma P^pi)^-1` on states.
pub fn state_resolvent<T: Real>(
    params: &MdpParams<T>,
    policy: &Policy<T>,
) -> Result<Matrix<T>, InferenceError> {
    let p = policy_transition(params, policy)?;
    let a = Matrix::identity(params.m_s).sub(&p.scaled(params.gamma));
    Ok(a.lu()?.inverse())
}

/// Asymptotic covariance of the plug-in value of a fixed policy `pi`:
/// `X' W' X'^T` with
/// `W'(i) = sum_j pi(j|i)^2 / w(i,j) [gamma^2 Var_{P_ij}(V^pi) + sigma2_R(i,j)]`.
///
/// Only pairs with `pi(j|i) > 0` need positive `w`.
pub fn fixed_policy_covariance<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    policy: &Policy<T>,
) -> Result<Matrix<T>, InferenceError> {
    if w.len() != params.n_pairs() {
        return Err(InferenceError::InvalidArgument("allocation length".into()));
    }
    let v = policy_value(params, policy)?;
    let noise = pair_noise(params, &v.values);
    let mut diag = vec![T::zero(); params.m_s];
    for (i, d) in diag.iter_mut().enumerate() {
        for j in 0..params.m_a {
            let pr = policy.prob(i, j);
            if pr == T::zero() {
                continue;
            }
            let k = params.index(i, j);
            if !(w[k] > T::zero()) {
                return Err(InferenceError::NonPositiveAllocation(format!(
                    "w[{k}] = {} on a pair the policy uses",
                    w[k]
                )));
            }
            *d += pr * pr / w[k] * noise[k];
        }
    }
    let x = state_resolvent(params, policy)?;
    let mut out = x.sandwich_diag(&diag);
    out.symmetrize();
    Ok(out)
}

/// `(e_k1 - e_k2)^T Sigma (e_k1 - e_k2)` for actions `a1 != a2` at state `s`.
pub fn delta_q_variance<T: Real>(
    sigma: &Matrix<T>,
    m_a: usize,
    s: usize,
    a1: usize,
    a2: usize,
) -> Result<T, InferenceError> {
    if a1 == a2 {
        return Err(InferenceError::InvalidArgument(
            "delta_q_variance needs two distinct actions".into(),
        ));
    }
    let (k1, k2) = (s * m_a + a1, s * m_a + a2);
    if a1 >= m_a || a2 >= m_a || k1.max(k2) >= sigma.rows() {
        return Err(InferenceError::InvalidArgument(format!(
            "pair ({s}, {a1}/{a2}) out of range"
        )));
    }
    let v = sigma[(k1, k1)] + sigma[(k2, k2)] - sigma[(k1, k2)] - sigma[(k2, k1)];
    Ok(v.max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval<T> {
    pub center: T,
    pub half_width: T,
    pub alpha: T,
}

impl<T: Real> ConfidenceInterval<T> {
    pub fn lower(&self) -> T {
        self.center - self.half_width
    }

    pub fn upper(&self) -> T {
        self.center + self.half_width
    }

    pub fn length(&self) -> T {
        self.half_width + self.half_width
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower() <= x && x <= self.upper()
    }
}

/// `point +- z_{1 - alpha/2} sqrt(asym_var / n)`.
pub fn confidence_interval<T: Real>(
    point: T,
    asym_var: T,
    n: u64,
    alpha: T,
) -> Result<ConfidenceInterval<T>, InferenceError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(InferenceError::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if !(asym_var >= T::zero()) {
        return Err(InferenceError::InvalidArgument(format!(
            "negative asymptotic variance {asym_var}"
        )));
    }
    if n == 0 {
        return Err(InferenceError::InvalidArgument("n must be positive".into()));
    }
    let z = T::lit(normal_quantile(1.0 - alpha.as_f64() / 2.0));
    Ok(ConfidenceInterval {
        center: point,
        half_width: z * (asym_var / T::lit(n as f64)).sqrt(),
        alpha,
    })
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// Everything the experiments need from one plug-in evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport<T> {
    pub sigma_q: Matrix<T>,
    pub sigma_v: Matrix<T>,
    pub sigma_chi: T,
    pub q: QTable<T>,
    pub v_star: ValueVector<T>,
    pub source: PlugInSource,
}

/// Runs [`q_covariance`] and [`v_covariance`] on one parameter set.
pub fn covariance_report<T: Real>(
    params: &MdpParams<T>,
    w: &[T],
    rho: &[T],
    source: PlugInSource,
    opts: &InferenceOptions<T>,
) -> Result<CovarianceReport<T>, InferenceError> {
    let qc = q_covariance(params, w, opts)?;
    let vc = v_covariance(params, w, &qc, rho)?;
    Ok(CovarianceReport {
        sigma_q: qc.sigma,
        sigma_v: vc.sigma_v,
        sigma_chi: vc.sigma_chi,
        q: qc.q,
        v_star: qc.v_star,
        source,
    })
}

fn write_matrix<T: Real>(out: &mut String, name: &str, m: &Matrix<T>) {
    writeln!(out, "{name} {} {}", m.rows(), m.cols()).expect("string write");
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:e}")).collect();
        writeln!(out, "{}", row.join(" ")).expect("string write");
    }
}

impl<T: Real> CovarianceReport<T> {
    /// Plain-text dump: `key value` lines, then each matrix as a
    /// `name rows cols` header followed by its rows (row-major, space
    /// separated). Pair index is `s * m_a + a`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let source = match self.source {
            PlugInSource::True => "true".to_string(),
            PlugInSource::Empirical { n } => format!("empirical {n}"),
        };
        writeln!(out, "source {source}").expect("string write");
        writeln!(out, "m_s {}", self.q.m_s()).expect("string write");
        writeln!(out, "m_a {}", self.q.m_a()).expect("string write");
        writeln!(out, "sigma_chi {:e}", self.sigma_chi).expect("string write");
        let q = Matrix::from_row_major(1, self.q.as_slice().len(), self.q.as_slice().to_vec());
        write_matrix(&mut out, "q", &q);
        write_matrix(&mut out, "sigma_q", &self.sigma_q);
        write_matrix(&mut out, "sigma_v", &self.sigma_v);
        out
    }

    pub fn from_text<R: BufRead>(input: R) -> Result<Self, InferenceError> {
        let lines: Vec<String> = input
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| report_error(&e.to_string()))?;
        let mut r = ReportReader {
            lines: lines
                .iter()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty())
                .collect(),
            pos: 0,
        };
        let source = match r.field("source")?.as_slice() {
            ["true"] => PlugInSource::True,
            ["empirical", n] => PlugInSource::Empirical { n: parse_int(n)? },
            _ => return Err(report_error("bad source")),
        };
        let m_s = parse_int(r.scalar("m_s")?)? as usize;
        let m_a = parse_int(r.scalar("m_a")?)? as usize;
        let sigma_chi = parse_num(r.scalar("sigma_chi")?)?;
        let q = r.matrix::<T>("q")?;
        let sigma_q = r.matrix("sigma_q")?;
        let sigma_v = r.matrix("sigma_v")?;
        let q = QTable::from_flat(m_s, m_a, q.into_vec())?;
        Ok(Self {
            v_star: ValueVector::optimal_from(&q),
            sigma_q,
            sigma_v,
            sigma_chi,
            q,
            source,
        })
    }
}

fn report_error(m: &str) -> InferenceError {
    InferenceError::InvalidArgument(format!("covariance report: {m}"))
}

fn parse_int(s: &str) -> Result<u64, InferenceError> {
    s.parse().map_err(|_| report_error("bad integer"))
}

fn parse_num<T: Real>(s: &str) -> Result<T, InferenceError> {
    s.parse::<f64>()
        .map(T::lit)
        .map_err(|_| report_error("bad number"))
}

struct ReportReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> ReportReader<'a> {
    fn next(&mut self) -> Result<&'a str, InferenceError> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| report_error("truncated"))?;
        self.pos += 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, InferenceError> {
        let mut parts = self.next()?.split_whitespace();
        if parts.next() != Some(key) {
            return Err(report_error(&format!("expected '{key}'")));
        }
        Ok(parts.collect())
    }

    fn scalar(&mut self, key: &str) -> Result<&'a str, InferenceError> {
        self.field(key)?
            .first()
            .copied()
            .ok_or_else(|| report_error(key))
    }

    fn matrix<T: Real>(&mut self, name: &str) -> Result<Matrix<T>, InferenceError> {
        let (rows, cols) = match self.field(name)?.as_slice() {
            [r, c] => (parse_int(r)? as usize, parse_int(c)? as usize),
            _ => return Err(report_error("matrix header")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            for tok in self.next()?.split_whitespace() {
                data.push(parse_num(tok)?);
            }
        }
        if data.len() != rows * cols {
            return Err(report_error("matrix size"));
        }
        Ok(Matrix::from_row_major(rows, cols, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mdp::{RewardSpec, TabularMdp};
    use approx::assert_relative_eq;

    fn fix_a_noisy(gamma: f64, var: f64) -> TabularMdp<f64> {
        TabularMdp::new(
            1,
            1,
            gamma,
            vec![RewardSpec::Gaussian {
                mean: 1.0,
                variance: var,
            }],
            vec![1.0],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn scalar_covariance() {
        let m = fix_a_noisy(0.5, 1.0);
        let qc = q_covariance(m.params(), &[1.0], &InferenceOptions::default()).unwrap();
        assert_relative_eq!(qc.sigma[(0, 0)], 4.0, epsilon = 1e-12);
        let vc = v_covariance(m.params(), &[1.0], &qc, &[1.0]).unwrap();
        assert_relative_eq!(vc.sigma_v[(0, 0)], 4.0, epsilon = 1e-12);
        assert_relative_eq!(vc.sigma_chi, 4.0, epsilon = 1e-12);

        let m = fixtures::fix_a(0.5);
        let qc = q_covariance(m.params(), &[1.0], &InferenceOptions::default()).unwrap();
        assert_eq!(qc.sigma[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_non_positive_allocation_and_ties() {
        let m = fix_a_noisy(0.5, 1.0);
        let err = q_covariance(m.params(), &[0.0], &InferenceOptions::default()).unwrap_err();
        assert!(matches!(err, InferenceError::NonPositiveAllocation(_)));
        assert!(err.to_string().starts_with("assumption 3 violated"));

        let tied = TabularMdp::new(
            1,
            2,
            0.5,
            vec![RewardSpec::Deterministic { value: 1.0 }; 2],
            vec![1.0, 1.0],
            vec![1.0],
        )
        .unwrap();
        let err =
            q_covariance(tied.params(), &[0.5, 0.5], &InferenceOptions::default()).unwrap_err();
        assert_eq!(err, InferenceError::NonUniqueArgmax(vec![0]));
        assert!(q_covariance(
            tied.params(),
            &[0.5, 0.5],
            &InferenceOptions::default().forced()
        )
        .is_ok());
    }

    #[test]
    fn chi_variance_is_quadratic_form() {
        let sigma_v = Matrix::from_diag(&[4.0, 4.0]);
        let rho = [0.5, 0.5];
        assert_eq!(dot(&rho, &sigma_v.mul_vec(&rho)), 2.0);
    }

    #[test]
    fn fixed_policy_scalar() {
        let m = fix_a_noisy(0.5, 1.0);
        let s = fixed_policy_covariance(m.params(), &[1.0], &Policy::uniform(1, 1)).unwrap();
        assert_relative_eq!(s[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn delta_q_examples() {
        let i = Matrix::<f64>::identity(4);
        assert_eq!(delta_q_variance(&i, 2, 1, 0, 1).unwrap(), 2.0);
        let d = Matrix::from_diag(&[1.0, 4.0]);
        assert_eq!(delta_q_variance(&d, 2, 0, 0, 1).unwrap(), 5.0);
        assert!(delta_q_variance(&d, 2, 0, 1, 1).is_err());
    }

    #[test]
    fn quantile_and_interval() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        assert!((normal_quantile(0.01) + 2.326347874040841).abs() < 1e-8);
        let ci = confidence_interval(3.0, 0.0, 10, 0.05).unwrap();
        assert_eq!(ci.half_width, 0.0);
        assert!(ci.contains(3.0));
        let ci = confidence_interval(0.0, 4.0, 100, 0.05).unwrap();
        assert_relative_eq!(ci.half_width, 1.959963984540054 * 0.2, epsilon = 1e-8);
        assert!(confidence_interval(0.0, 1.0, 10, 1.0).is_err());
        assert!(confidence_interval(0.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn near_ties_are_listed() {
        let q = QTable::from_flat(2, 2, vec![1.0, 0.5, 2.0, 2.0 + 1e-9]).unwrap();
        let ties = check_unique_argmax(&q, 1e-6);
        assert_eq!(ties.len(), 1);
        assert_eq!((ties[0].state, ties[0].best, ties[0].runner_up), (1, 1, 0));
        let q = QTable::from_flat(2, 2, vec![1.0, 0.5, 2.0, 3.0]).unwrap();
        assert!(check_unique_argmax(&q, 1e-6).is_empty());
    }

    #[test]
    fn report_text_round_trip() {
        let m = fixtures::fix_d();
        let w = vec![1.0 / 6.0; 6];
        let rep = covariance_report(
            m.params(),
            &w,
            m.rho(),
            PlugInSource::Empirical { n: 42 },
            &InferenceOptions::default(),
        )
        .unwrap();
        let text = rep.to_text();
        let back = CovarianceReport::<f64>::from_text(text.as_bytes()).unwrap();
        assert_eq!(back.source, rep.source);
        assert_eq!(back.sigma_q.rows(), 6);
        assert!(back.sigma_q.sub(&rep.sigma_q).max_abs() < 1e-12 * rep.sigma_q.max_abs());
        assert_relative_eq!(back.sigma_chi, rep.sigma_chi, max_relative = 1e-14);
    }
}
