//! Exploration baselines: epsilon-greedy, fixed random exploration and
//! posterior sampling (PSRL).
//!
//! Every agent appends to a [`TrajectoryDataset`] through a [`Simulator`],
//! so its output feeds the estimators unchanged.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::estimation::{empirical_model, EmpiricalModel, Simulator, TrajectoryDataset};
use crate::mdp::{greedy_actions, solve_q, MdpParams, Policy};

/// Tolerance of the value-iteration solves inside the agents. Only the
/// greedy action is used, so this is loose on purpose.
const AGENT_SOLVE_TOL: f64 = 1e-8;
const AGENT_MAX_ITER: usize = 1_000_000;

/// `pi(1|s) = p_right`, `pi(0|s) = 1 - p_right` at every state.
pub fn random_explore_policy(m_s: usize, p_right: f64) -> Policy<f64> {
    assert!(
        (0.0..=1.0).contains(&p_right),
        "p_right must be a probability"
    );
    let probs = (0..m_s).flat_map(|_| [1.0 - p_right, p_right]).collect();
    Policy::from_flat(m_s, 2, probs).expect("valid rows")
}

/// `(1 - eps)` on the greedy action plus `eps / m_a` on every action.
pub fn eps_greedy_policy(greedy: &[usize], m_a: usize, eps: f64) -> Policy<f64> {
    let mut probs = vec![eps / m_a as f64; greedy.len() * m_a];
    for (s, &a) in greedy.iter().enumerate() {
        probs[s * m_a + a] += 1.0 - eps;
    }
    Policy::from_flat(greedy.len(), m_a, probs).expect("valid rows")
}

/// Greedy actions (lowest index on ties) of the plug-in model of `data`.
/// Pairs never visited are treated as zero-reward self loops.
pub fn plug_in_greedy(data: &TrajectoryDataset, gamma: f64) -> Vec<usize> {
    let emp: EmpiricalModel<f64> = empirical_model(data);
    let q = solve_q(&emp.params_filled(gamma), AGENT_SOLVE_TOL, AGENT_MAX_ITER)
        .expect("contraction converges");
    greedy_actions(&q, 0.0).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsGreedyAgent {
    pub eps: f64,
    /// Fraction of the agent's budget between refreshes of the plug-in Q.
    pub refresh_fraction: f64,
    pub gamma: f64,
    greedy: Option<Vec<usize>>,
}

impl EpsGreedyAgent {
    pub fn new(eps: f64, gamma: f64) -> Self {
        assert!((0.0..=1.0).contains(&eps), "eps must be a probability");
        Self {
            eps,
            refresh_fraction: 0.1,
            gamma,
            greedy: None,
        }
    }

    pub fn with_greedy(mut self, greedy: Vec<usize>) -> Self {
        self.greedy = Some(greedy);
        self
    }

    pub fn greedy(&self) -> Option<&[usize]> {
        self.greedy.as_deref()
    }

    /// One action at state `s`. Uniform when no greedy table is set yet.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, m_a: usize, rng: &mut R) -> usize {
        match &self.greedy {
            Some(g) if rng.random::<f64>() >= self.eps => g[s],
            _ => rng.random_range(0..m_a),
        }
    }

    /// Runs `steps` transitions, re-solving the plug-in model of all of
    /// `data` at the start of every `refresh_fraction * steps` chunk.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        sim: &Simulator<'_, f64>,
        steps: usize,
        data: &mut TrajectoryDataset,
        rng: &mut R,
    ) {
        let chunk = ((steps as f64 * self.refresh_fraction).round() as usize).max(1);
        let m_a = data.m_a();
        let mut done = 0;
        while done < steps {
            if data.n() > 0 {
                self.greedy = Some(plug_in_greedy(data, self.gamma));
            }
            let len = chunk.min(steps - done);
            let mut s = match data.last_state() {
                Some(s) => s,
                None => sim.initial_state(rng),
            };
            for _ in 0..len {
                let a = self.step(s, m_a, rng);
                let rec = sim.step(data.next_t(), s, a, rng);
                s = rec.s_next;
                data.push(rec);
            }
            done += len;
        }
    }
}

/// Conjugate posterior over the transition rows (Dirichlet) and the mean
/// rewards (Normal with known observation variance).
#[derive(Debug, Clone, PartialEq)]
pub struct PsrlAgent {
    m_s: usize,
    m_a: usize,
    pub gamma: f64,
    /// Dirichlet weights, `alpha[k * m_s + s']`.
    alpha: Vec<f64>,
    prior_mean: f64,
    prior_var: f64,
    /// Known observation variance per pair.
    obs_var: Vec<f64>,
    count: Vec<u64>,
    reward_sum: Vec<f64>,
}

impl PsrlAgent {
    /// Flat prior: Dirichlet(1, ..., 1) rows and `N(prior_mean, prior_var)`
    /// means.
    pub fn new(
        m_s: usize,
        m_a: usize,
        gamma: f64,
        obs_var: Vec<f64>,
        prior_mean: f64,
        prior_var: f64,
    ) -> Self {
        let n = m_s * m_a;
        assert_eq!(obs_var.len(), n, "one observation variance per pair");
        assert!(prior_var > 0.0, "prior variance must be positive");
        Self {
            m_s,
            m_a,
            gamma,
            alpha: vec![1.0; n * m_s],
            prior_mean,
            prior_var,
            obs_var,
            count: vec![0; n],
            reward_sum: vec![0.0; n],
        }
    }

    pub fn dirichlet_weights(&self) -> &[f64] {
        &self.alpha
    }

    /// Adds the sufficient statistics of a whole dataset.
    pub fn observe(&mut self, data: &TrajectoryDataset) {
        assert!(
            data.m_s() == self.m_s && data.m_a() == self.m_a,
            "dataset shape"
        );
        for (a, &c) in self.alpha.iter_mut().zip(data.transition_counts()) {
            *a += c as f64;
        }
        for (k, &v) in data.visits().iter().enumerate() {
            self.count[k] += v;
        }
        for (s, r) in self.reward_sum.iter_mut().zip(data.reward_sums()) {
            *s += r;
        }
    }

    /// Posterior mean and variance of `mu_R(k)`.
    pub fn reward_posterior(&self, k: usize) -> (f64, f64) {
        let c = self.count[k] as f64;
        if c > 0.0 && self.obs_var[k] == 0.0 {
            return (self.reward_sum[k] / c, 0.0);
        }
        let prec = 1.0 / self.prior_var + c / self.obs_var[k].max(f64::MIN_POSITIVE);
        let mean = (self.prior_mean / self.prior_var
            + self.reward_sum[k] / self.obs_var[k].max(f64::MIN_POSITIVE))
            / prec;
        (mean, 1.0 / prec)
    }

    /// Posterior-mean transition row of pair `k`.
    pub fn mean_row(&self, k: usize) -> Vec<f64> {
        let row = &self.alpha[k * self.m_s..(k + 1) * self.m_s];
        let total: f64 = row.iter().sum();
        row.iter().map(|a| a / total).collect()
    }

    /// One model drawn from the posterior.
    pub fn sample_model<R: Rng + ?Sized>(&self, rng: &mut R) -> MdpParams<f64> {
        let n = self.m_s * self.m_a;
        let mut p = Vec::with_capacity(n * self.m_s);
        for k in 0..n {
            let draws: Vec<f64> = self.alpha[k * self.m_s..(k + 1) * self.m_s]
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("positive weight").sample(rng))
                .collect();
            let total: f64 = draws.iter().sum();
            p.extend(draws.iter().map(|x| x / total));
        }
        let mu_r = (0..n)
            .map(|k| {
                let (m, v) = self.reward_posterior(k);
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect();
        MdpParams {
            m_s: self.m_s,
            m_a: self.m_a,
            gamma: self.gamma,
            mu_r,
            sigma2_r: vec![0.0; n],
            p,
        }
    }

    /// Samples a model, acts greedily on it for `len` steps, then folds the
    /// new transitions into the posterior.
    pub fn episode<R: Rng + ?Sized>(
        &mut self,
        sim: &Simulator<'_, f64>,
        len: usize,
        data: &mut TrajectoryDataset,
        rng: &mut R,
    ) {
        let model = self.sample_model(rng);
        let q = solve_q(&model, AGENT_SOLVE_TOL, AGENT_MAX_ITER).expect("contraction converges");
        let policy = Policy::deterministic(self.m_a, &greedy_actions(&q, 0.0).0);
        let mut segment = data.continuation();
        sim.run(&policy, len, None, &mut segment, rng);
        self.observe(&segment);
        data.merge(&segment);
    }

    /// Splits `steps` evenly over `episodes` (the first `steps % episodes`
    /// episodes get one extra step).
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        sim: &Simulator<'_, f64>,
        steps: usize,
        episodes: usize,
        data: &mut TrajectoryDataset,
        rng: &mut R,
    ) {
        let episodes = episodes.max(1);
        for e in 0..episodes {
            let len = steps / episodes + usize::from(e < steps % episodes);
            if len > 0 {
                self.episode(sim, len, data, rng);
            }
        }
    }
}

/// An exploration strategy with its mutable state.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplorationAgent {
    EpsGreedy(EpsGreedyAgent),
    RandomExplore(Policy<f64>),
    Psrl { agent: PsrlAgent, episodes: usize },
}

impl ExplorationAgent {
    /// Appends `steps` transitions to `data`. PSRL first absorbs whatever
    /// `data` already holds (the warm start) into its posterior.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        sim: &Simulator<'_, f64>,
        steps: usize,
        data: &mut TrajectoryDataset,
        rng: &mut R,
    ) {
        match self {
            ExplorationAgent::EpsGreedy(agent) => agent.run(sim, steps, data, rng),
            ExplorationAgent::RandomExplore(policy) => sim.run(policy, steps, None, data, rng),
            ExplorationAgent::Psrl { agent, episodes } => {
                agent.observe(data);
                agent.run(sim, steps, *episodes, data, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rng::stream_rng;

    #[test]
    fn random_explore_rows() {
        let p = random_explore_policy(3, 0.8);
        assert_eq!(p.row(1), &[1.0 - 0.8, 0.8]);
        assert_eq!(random_explore_policy(2, 0.5).as_slice(), &[0.5; 4]);
    }

    #[test]
    fn eps_extremes() {
        let mut rng = stream_rng(1, 0);
        let greedy = EpsGreedyAgent::new(0.0, 0.9).with_greedy(vec![1, 0]);
        assert!((0..200).all(|_| greedy.step(0, 2, &mut rng) == 1));
        let uniform = EpsGreedyAgent::new(1.0, 0.9).with_greedy(vec![1, 0]);
        let ones = (0..20_000)
            .filter(|_| uniform.step(0, 2, &mut rng) == 1)
            .count();
        assert!((ones as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn psrl_posterior_concentrates() {
        let m = fixtures::fix_b();
        let mut agent = PsrlAgent::new(2, 2, 0.9, vec![0.0; 4], 0.0, 100.0);
        let mut data = TrajectoryDataset::stats_only(2, 2);
        let sim = Simulator::new(&m);
        let always_right = Policy::deterministic(2, &[1, 1]);
        sim.run(
            &always_right,
            10_000,
            Some(1),
            &mut data,
            &mut stream_rng(2, 0),
        );
        agent.observe(&data);
        let row = agent.mean_row(3);
        assert!(row[1] > 0.99);
        assert_eq!(agent.reward_posterior(3), (2.0, 0.0));
    }

    #[test]
    fn psrl_single_episode_uses_one_policy() {
        let m = fixtures::fix_b();
        let mut agent = PsrlAgent::new(2, 2, 0.9, vec![0.0; 4], 0.0, 100.0);
        let mut data = TrajectoryDataset::new(2, 2);
        agent.run(
            &Simulator::new(&m),
            500,
            1,
            &mut data,
            &mut stream_rng(3, 0),
        );
        assert_eq!(data.n(), 500);
        // deterministic model + deterministic policy: one action per state
        for s in 0..2 {
            let used: std::collections::BTreeSet<usize> = data
                .records()
                .iter()
                .filter(|r| r.s == s)
                .map(|r| r.a)
                .collect();
            assert!(used.len() <= 1);
        }
    }
}
