//! Trajectory collection and plug-in estimators of the model parameters.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::mdp::{MdpError, MdpParams, Policy, RewardSpec, TabularMdp};
use crate::rng::stream_rng;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("state-action pairs never visited: {0:?}")]
    Unvisited(Vec<usize>),
    #[error("dataset has no cost observations")]
    NoCosts,
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// One observed transition `(s, a, r, s')` at step `t`, plus an optional
/// cost observation for constrained models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub t: u64,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub c: Option<f64>,
}

/// Observed transitions together with their sufficient statistics.
///
/// The statistics are the only input of [`empirical_model`]. Record
/// retention can be switched off for long Monte-Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    m_s: usize,
    m_a: usize,
    keep_records: bool,
    records: Vec<TransitionRecord>,
    n: u64,
    visits: Vec<u64>,
    transitions: Vec<u64>,
    reward_sum: Vec<f64>,
    reward_sq_sum: Vec<f64>,
    cost_sum: Option<Vec<f64>>,
    cost_sq_sum: Option<Vec<f64>>,
    last_state: Option<usize>,
    clock: u64,
}

impl TrajectoryDataset {
    pub fn new(m_s: usize, m_a: usize) -> Self {
        Self::with_retention(m_s, m_a, true)
    }

    /// Dataset that keeps sufficient statistics only.
    pub fn stats_only(m_s: usize, m_a: usize) -> Self {
        Self::with_retention(m_s, m_a, false)
    }

    fn with_retention(m_s: usize, m_a: usize, keep_records: bool) -> Self {
        let n_pairs = m_s * m_a;
        Self {
            m_s,
            m_a,
            keep_records,
            records: Vec::new(),
            n: 0,
            visits: vec![0; n_pairs],
            transitions: vec![0; n_pairs * m_s],
            reward_sum: vec![0.0; n_pairs],
            reward_sq_sum: vec![0.0; n_pairs],
            cost_sum: None,
            cost_sq_sum: None,
            last_state: None,
            clock: 0,
        }
    }

    /// Empty dataset that continues this trajectory: same shape and
    /// retention mode, same current state and step counter.
    pub fn continuation(&self) -> Self {
        let mut out = Self::with_retention(self.m_s, self.m_a, self.keep_records);
        out.last_state = self.last_state;
        out.clock = self.clock;
        out
    }

    /// Step index the next record will carry.
    pub fn next_t(&self) -> u64 {
        self.clock
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn m_a(&self) -> usize {
        self.m_a
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn transition_counts(&self) -> &[u64] {
        &self.transitions
    }

    /// Per-pair sums of observed rewards.
    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sum
    }

    pub fn has_costs(&self) -> bool {
        self.cost_sum.is_some()
    }

    /// State the trajectory is currently in (the last `s_next`).
    pub fn last_state(&self) -> Option<usize> {
        self.last_state
    }

    pub fn push(&mut self, rec: TransitionRecord) {
        assert!(
            rec.s < self.m_s && rec.s_next < self.m_s && rec.a < self.m_a,
            "record out of range"
        );
        let k = rec.s * self.m_a + rec.a;
        self.n += 1;
        self.visits[k] += 1;
        self.transitions[k * self.m_s + rec.s_next] += 1;
        self.reward_sum[k] += rec.r;
        self.reward_sq_sum[k] += rec.r * rec.r;
        if let Some(c) = rec.c {
            let n_pairs = self.visits.len();
            self.cost_sum.get_or_insert_with(|| vec![0.0; n_pairs])[k] += c;
            self.cost_sq_sum.get_or_insert_with(|| vec![0.0; n_pairs])[k] += c * c;
        }
        self.last_state = Some(rec.s_next);
        self.clock = rec.t + 1;
        if self.keep_records {
            self.records.push(rec);
        }
    }

    /// Appends another segment of the same trajectory.
    pub fn merge(&mut self, other: &TrajectoryDataset) {
        assert!(
            self.m_s == other.m_s && self.m_a == other.m_a,
            "datasets of different models"
        );
        if other.n == 0 {
            return;
        }
        self.n += other.n;
        let add = |a: &mut [u64], b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        let addf = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.visits, &other.visits);
        add(&mut self.transitions, &other.transitions);
        addf(&mut self.reward_sum, &other.reward_sum);
        addf(&mut self.reward_sq_sum, &other.reward_sq_sum);
        let n_pairs = self.visits.len();
        if let (Some(s), Some(q)) = (&other.cost_sum, &other.cost_sq_sum) {
            addf(self.cost_sum.get_or_insert_with(|| vec![0.0; n_pairs]), s);
            addf(
                self.cost_sq_sum.get_or_insert_with(|| vec![0.0; n_pairs]),
                q,
            );
        }
        self.last_state = other.last_state;
        self.clock = self.clock.max(other.clock);
        if self.keep_records {
            self.records.extend_from_slice(&other.records);
        }
    }

    pub fn unvisited(&self) -> Vec<usize> {
        (0..self.visits.len())
            .filter(|&k| self.visits[k] == 0)
            .collect()
    }

    /// Writes `t,s,a,r,s_next` (plus `c` when costs were observed), one
    /// record per line, 0-based indices, flat pair index `s * m_a + a`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), EstimationError> {
        let with_cost = self.has_costs();
        writeln!(out, "# m_s={} m_a={}", self.m_s, self.m_a)?;
        writeln!(
            out,
            "{}",
            if with_cost {
                "t,s,a,r,s_next,c"
            } else {
                "t,s,a,r,s_next"
            }
        )?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            write!(line, "{},{},{},{},{}", r.t, r.s, r.a, r.r, r.s_next).expect("string write");
            if with_cost {
                write!(line, ",{}", r.c.unwrap_or(f64::NAN)).expect("string write");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, EstimationError> {
        let mut lines = input.lines().enumerate();
        let fmt = |line: usize, message: &str| EstimationError::Format {
            line: line + 1,
            message: message.to_string(),
        };
        let (i, dims) = lines.next().ok_or_else(|| fmt(0, "empty file"))?;
        let dims = dims?;
        let mut m_s = None;
        let mut m_a = None;
        for tok in dims.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("m_s=") {
                m_s = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("m_a=") {
                m_a = v.parse::<usize>().ok();
            }
        }
        let (m_s, m_a) = m_s
            .zip(m_a)
            .ok_or_else(|| fmt(i, "expected '# m_s=<n> m_a=<n>'"))?;
        let (i, header) = lines.next().ok_or_else(|| fmt(1, "missing header"))?;
        let header = header?;
        let with_cost = match header.trim() {
            "t,s,a,r,s_next" => false,
            "t,s,a,r,s_next,c" => true,
            _ => return Err(fmt(i, "header must be 't,s,a,r,s_next[,c]'")),
        };
        let mut data = Self::new(m_s, m_a);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != if with_cost { 6 } else { 5 } {
                return Err(fmt(i, "wrong number of fields"));
            }
            let bad = |_| fmt(i, "unparsable field");
            let rec = TransitionRecord {
                t: f[0].parse().map_err(|_| fmt(i, "bad t"))?,
                s: f[1].parse().map_err(|_| fmt(i, "bad s"))?,
                a: f[2].parse().map_err(|_| fmt(i, "bad a"))?,
                r: f[3].parse().map_err(bad)?,
                s_next: f[4].parse().map_err(|_| fmt(i, "bad s_next"))?,
                c: if with_cost {
                    Some(f[5].parse().map_err(bad)?)
                } else {
                    None
                },
            };
            if rec.s >= m_s || rec.s_next >= m_s || rec.a >= m_a {
                return Err(fmt(i, "index out of range"));
            }
            data.push(rec);
        }
        Ok(data)
    }
}

/// Categorical sampling tables in `f64`.
#[derive(Debug, Clone)]
struct Cumulative {
    width: usize,
    table: Vec<f64>,
}

impl Cumulative {
    fn new<T: Real>(width: usize, probs: &[T]) -> Self {
        let mut table = Vec::with_capacity(probs.len());
        for row in probs.chunks(width) {
            let mut acc = 0.0;
            for &p in row {
                acc += p.as_f64();
                table.push(acc);
            }
        }
        Self { width, table }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, row: usize, rng: &mut R) -> usize {
        let cum = &self.table[row * self.width..(row + 1) * self.width];
        let u = rng.random::<f64>() * cum[self.width - 1];
        // last index with positive mass absorbs rounding at the top end
        cum.iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| cum.iter().rposition(|&c| c > 0.0).unwrap_or(self.width - 1))
    }
}

/// Samples single transitions of a model. Rewards, costs and next states are
/// drawn independently given `(s, a)`.
#[derive(Debug, Clone)]
pub struct Simulator<'a, T> {
    model: &'a TabularMdp<T>,
    costs: Option<&'a [RewardSpec<T>]>,
    next: Cumulative,
    rho: Cumulative,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(model: &'a TabularMdp<T>) -> Self {
        Self {
            model,
            costs: None,
            next: Cumulative::new(model.m_s(), &model.params().p),
            rho: Cumulative::new(model.m_s(), model.rho()),
        }
    }

    pub fn with_costs(mut self, costs: &'a [RewardSpec<T>]) -> Self {
        assert_eq!(costs.len(), self.model.n_pairs(), "one cost spec per pair");
        self.costs = Some(costs);
        self
    }

    pub fn model(&self) -> &TabularMdp<T> {
        self.model
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.rho.sample(0, rng)
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(
        &self,
        t: u64,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> TransitionRecord {
        let k = s * self.model.m_a() + a;
        let r = self.model.rewards()[k].sample(rng);
        let c = self.costs.map(|c| c[k].sample(rng));
        let s_next = self.next.sample(k, rng);
        TransitionRecord {
            t,
            s,
            a,
            r,
            s_next,
            c,
        }
    }

    /// Runs `policy` for `steps` transitions, appending to `data`. Starts
    /// from the dataset's last state if any, else from `s0`, else from `rho`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        policy: &Policy<T>,
        steps: usize,
        s0: Option<usize>,
        data: &mut TrajectoryDataset,
        rng: &mut R,
    ) {
        let actions = PolicySampler::new(policy);
        let mut s = match data.last_state().or(s0) {
            Some(s) => s,
            None => self.initial_state(rng),
        };
        for _ in 0..steps {
            let a = actions.sample(s, rng);
            let rec = self.step(data.next_t(), s, a, rng);
            s = rec.s_next;
            data.push(rec);
        }
    }
}

/// Draws actions from a stochastic policy.
#[derive(Debug, Clone)]
pub struct PolicySampler(Cumulative);

impl PolicySampler {
    pub fn new<T: Real>(policy: &Policy<T>) -> Self {
        Self(Cumulative::new(policy.m_a(), policy.as_slice()))
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        self.0.sample(s, rng)
    }
}

/// A single Markov trajectory of `n` steps under `policy`, seeded by
/// `(seed, stream)`. The initial state is `s0` or a draw from `rho`.
pub fn collect_trajectory<T: Real>(
    model: &TabularMdp<T>,
    policy: &Policy<T>,
    n: usize,
    seed: u64,
    stream: u64,
    s0: Option<usize>,
) -> TrajectoryDataset {
    let mut rng = stream_rng(seed, stream);
    let mut data = TrajectoryDataset::new(model.m_s(), model.m_a());
    Simulator::new(model).run(policy, n, s0, &mut data, &mut rng);
    data
}

/// Plug-in estimates built from a dataset.
///
/// Entries of unvisited pairs are `NaN` and listed in `unvisited`; use
/// [`EmpiricalModel::params`] to get a complete parameter set or an error.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel<T> {
    pub m_s: usize,
    pub m_a: usize,
    pub n: u64,
    pub mu_hat: Vec<T>,
    pub sigma2_hat: Vec<T>,
    pub p_hat: Vec<T>,
    /// Visit frequencies `count(k) / n` (all zero when `n == 0`).
    pub w_hat: Vec<T>,
    pub unvisited: Vec<usize>,
    pub mu_c_hat: Option<Vec<T>>,
    pub sigma2_c_hat: Option<Vec<T>>,
}

impl<T: Real> EmpiricalModel<T> {
    pub fn is_complete(&self) -> bool {
        self.unvisited.is_empty()
    }

    pub fn mu_hat(&self, k: usize) -> Option<T> {
        let v = self.mu_hat[k];
        (!v.is_nan()).then_some(v)
    }

    /// Estimated parameters for discount `gamma`; refuses if any pair was
    /// never visited.
    pub fn params(&self, gamma: T) -> Result<MdpParams<T>, EstimationError> {
        if !self.unvisited.is_empty() {
            return Err(EstimationError::Unvisited(self.unvisited.clone()));
        }
        Ok(MdpParams {
            m_s: self.m_s,
            m_a: self.m_a,
            gamma,
            mu_r: self.mu_hat.clone(),
            sigma2_r: self.sigma2_hat.clone(),
            p: self.p_hat.clone(),
        })
    }

    /// Like [`EmpiricalModel::params`] but never fails: unvisited pairs get
    /// zero reward moments and a self loop. Used where a working model is
    /// needed before every pair has data (greedy refreshes, placeholders
    /// for pairs a computation never reads).
    pub fn params_filled(&self, gamma: T) -> MdpParams<T> {
        let mut params = MdpParams {
            m_s: self.m_s,
            m_a: self.m_a,
            gamma,
            mu_r: self.mu_hat.clone(),
            sigma2_r: self.sigma2_hat.clone(),
            p: self.p_hat.clone(),
        };
        for &k in &self.unvisited {
            params.mu_r[k] = T::zero();
            params.sigma2_r[k] = T::zero();
            let s = k / self.m_a;
            for s2 in 0..self.m_s {
                params.p[k * self.m_s + s2] = if s2 == s { T::one() } else { T::zero() };
            }
        }
        params
    }

    pub fn cost_means(&self) -> Result<&[T], EstimationError> {
        if !self.unvisited.is_empty() {
            return Err(EstimationError::Unvisited(self.unvisited.clone()));
        }
        self.mu_c_hat.as_deref().ok_or(EstimationError::NoCosts)
    }
}

fn ratio_moments<T: Real>(sum: &[f64], sq: &[f64], visits: &[u64]) -> (Vec<T>, Vec<T>) {
    sum.iter()
        .zip(sq)
        .zip(visits)
        .map(|((&s, &q), &c)| {
            if c == 0 {
                (T::nan(), T::nan())
            } else {
                let c = c as f64;
                let mean = s / c;
                // population form q/c - mean^2, clamped against rounding
                (T::lit(mean), T::lit((q / c - mean * mean).max(0.0)))
            }
        })
        .unzip()
}

/// Ratio estimators of mean reward, (population) reward variance,
/// transition probabilities and visit frequencies.
pub fn empirical_model<T: Real>(data: &TrajectoryDataset) -> EmpiricalModel<T> {
    let (m_s, m_a) = (data.m_s, data.m_a);
    let (mu_hat, sigma2_hat) = ratio_moments(&data.reward_sum, &data.reward_sq_sum, &data.visits);
    let mut p_hat = Vec::with_capacity(data.transitions.len());
    for (k, &c) in data.visits.iter().enumerate() {
        for s2 in 0..m_s {
            p_hat.push(if c == 0 {
                T::nan()
            } else {
                T::lit(data.transitions[k * m_s + s2] as f64 / c as f64)
            });
        }
    }
    let w_hat = data
        .visits
        .iter()
        .map(|&c| {
            if data.n == 0 {
                T::zero()
            } else {
                T::lit(c as f64 / data.n as f64)
            }
        })
        .collect();
    let (mu_c_hat, sigma2_c_hat) = match (&data.cost_sum, &data.cost_sq_sum) {
        (Some(s), Some(q)) => {
            let (m, v) = ratio_moments(s, q, &data.visits);
            (Some(m), Some(v))
        }
        _ => (None, None),
    };
    EmpiricalModel {
        m_s,
        m_a,
        n: data.n,
        mu_hat,
        sigma2_hat,
        p_hat,
        w_hat,
        unvisited: data.unvisited(),
        mu_c_hat,
        sigma2_c_hat,
    }
}

/// Covariance of a single one-hot draw from `p_row`:
/// `diag(p) - p p^T`.
pub fn multinomial_cov<T: Real>(p_row: &[T]) -> Matrix<T> {
    Matrix::from_fn(p_row.len(), p_row.len(), |i, j| {
        if i == j {
            p_row[i] * (T::one() - p_row[i])
        } else {
            -p_row[i] * p_row[j]
        }
    })
}

/// `v^T (diag(p) - p p^T) v`, i.e. the variance of `v(S')` with `S' ~ p`.
pub fn multinomial_quadratic<T: Real>(p_row: &[T], v: &[T]) -> T {
    let mean: T = p_row.iter().zip(v).map(|(&p, &x)| p * x).sum();
    let second: T = p_row
        .iter()
        .zip(v)
        .map(|(&p, &x)| p * (x - mean) * (x - mean))
        .sum();
    second.max(T::zero())
}
