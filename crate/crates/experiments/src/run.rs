//! Monte-Carlo experiments.
//!
//! Replication `r` of budget index `i` and agent index `j` draws from
//! `stream_rng(seed, (r << 32) | (i << 16) | j)`, replications run on the current
//! rayon pool and results are folded in replication order, so tables do
//! not depend on the thread count.

use qinfer_core::approx_vi::{
    approx_q_covariance, approx_solve_q, representative_params, GeneralizationMap,
};
use qinfer_core::baselines::{random_explore_policy, EpsGreedyAgent, ExplorationAgent, PsrlAgent};
use qinfer_core::estimation::{empirical_model, Simulator, TrajectoryDataset};
use qinfer_core::inference::{
    confidence_interval, covariance_report, InferenceOptions, PlugInSource,
};
use qinfer_core::mdp::{greedy_actions, solve_q};
use qinfer_core::qocba::{run_qocba, QocbaError, QocbaObjective, QocbaOptions};
use qinfer_core::rng::{stream_rng, StreamRng};
use qinfer_core::scalar::dot;
use qinfer_core::{EmpiricalModel, Mdp, Policy};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    AgentKind, AgentSpec, ConfigError, ExperimentConfig, ExperimentKind, ObjectiveSpec, WarmStart,
};
use crate::table::{mean_half_width, proportion_half_width, ResultRow, ResultTable};

const SOLVE_TOL: f64 = 1e-10;
const SOLVE_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

pub fn rep_rng(seed: u64, rep: usize, n_index: usize, agent_index: usize) -> StreamRng {
    stream_rng(
        seed,
        ((rep as u64) << 32) | ((n_index as u64) << 16) | agent_index as u64,
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Solve => solve_experiment(cfg),
        ExperimentKind::Coverage => coverage_experiment(cfg),
        ExperimentKind::CorrectSelection => correct_selection_experiment(cfg),
        ExperimentKind::CiLength => ci_length_experiment(cfg),
        ExperimentKind::QocbaRun => qocba_run_experiment(cfg),
    }
}

fn exact_row(label: &str, quantity: String, estimate: f64) -> ResultRow {
    ResultRow {
        experiment: "solve".into(),
        label: label.into(),
        n: None,
        quantity,
        estimate,
        half_width: None,
        valid: 1,
        na: 0,
    }
}

/// Exact `Q*`, `V*`, `chi*` and the greedy policy of the configured model.
pub fn solve_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    let env = cfg.build_env()?;
    let q = solve_q(env.params(), SOLVE_TOL, SOLVE_MAX_ITER).map_err(runtime)?;
    let v = q.state_values();
    let (actions, _) = greedy_actions(&q, 0.0);
    let mut t = ResultTable::default();
    for s in 0..env.m_s() {
        for a in 0..env.m_a() {
            t.push(exact_row("truth", format!("q_s{s}_a{a}"), q.get(s, a)));
        }
    }
    for (s, &x) in v.iter().enumerate() {
        t.push(exact_row("truth", format!("v_s{s}"), x));
    }
    t.push(exact_row("truth", "chi".into(), dot(&v, env.rho())));
    for (s, &a) in actions.iter().enumerate() {
        t.push(exact_row("truth", format!("greedy_s{s}"), a as f64));
    }
    Ok(t)
}

/// Per-replication interval outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalOutcome {
    pub q_hit: Vec<bool>,
    pub v_hit: Vec<bool>,
    pub chi_hit: bool,
    pub q_len: Vec<f64>,
    pub chi_len: f64,
}

impl IntervalOutcome {
    pub fn q_coverage(&self) -> f64 {
        self.q_hit.iter().filter(|&&h| h).count() as f64 / self.q_hit.len() as f64
    }

    pub fn v_coverage(&self) -> f64 {
        self.v_hit.iter().filter(|&&h| h).count() as f64 / self.v_hit.len() as f64
    }

    pub fn mean_q_len(&self) -> f64 {
        self.q_len.iter().sum::<f64>() / self.q_len.len() as f64
    }
}

/// Targets of the intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub chi: f64,
    pub actions: Vec<usize>,
}

impl Truth {
    pub fn exact(env: &Mdp) -> Result<Self, RunError> {
        let q = solve_q(env.params(), 1e-12, SOLVE_MAX_ITER).map_err(runtime)?;
        let v = q.state_values();
        let chi = dot(&v, env.rho());
        let (actions, unique) = greedy_actions(&q, 1e-9);
        if !unique {
            return Err(RunError::Runtime(
                "true optimal action is not unique".into(),
            ));
        }
        Ok(Self {
            q: q.into_vec(),
            v,
            chi,
            actions,
        })
    }

    pub fn approximate(env: &Mdp, map: &GeneralizationMap<f64>) -> Result<Self, RunError> {
        let sol = approx_solve_q(env.params(), map, 1e-12, SOLVE_MAX_ITER).map_err(runtime)?;
        let v = sol.q.state_values();
        let chi = dot(&v, env.rho());
        let (actions, _) = greedy_actions(&sol.q, 0.0);
        Ok(Self {
            q: sol.q.into_vec(),
            v,
            chi,
            actions,
        })
    }
}

fn inference_opts() -> InferenceOptions<f64> {
    InferenceOptions {
        tol: SOLVE_TOL,
        ..InferenceOptions::default()
    }
    .forced()
}

/// Asymptotic normal intervals from a finished dataset; `None` when a pair is
/// unvisited or the plug-in covariance is unavailable.
pub fn exact_intervals(
    env: &Mdp,
    emp: &EmpiricalModel,
    truth: &Truth,
    alpha: f64,
) -> Option<IntervalOutcome> {
    let params = emp.params(env.gamma()).ok()?;
    let report = covariance_report(
        &params,
        &emp.w_hat,
        env.rho(),
        PlugInSource::Empirical { n: emp.n },
        &inference_opts(),
    )
    .ok()?;
    let n = emp.n;
    let ci =
        |x: f64, var: f64| confidence_interval(x, var, n, alpha).expect("valid interval inputs");
    let q = report.q.as_slice();
    let mut out = IntervalOutcome {
        q_hit: Vec::with_capacity(q.len()),
        v_hit: Vec::with_capacity(truth.v.len()),
        chi_hit: false,
        q_len: Vec::with_capacity(q.len()),
        chi_len: 0.0,
    };
    for (k, &qk) in q.iter().enumerate() {
        let c = ci(qk, report.sigma_q[(k, k)]);
        out.q_hit.push(c.contains(truth.q[k]));
        out.q_len.push(c.length());
    }
    for (s, &vs) in report.v_star.values.iter().enumerate() {
        out.v_hit
            .push(ci(vs, report.sigma_v[(s, s)]).contains(truth.v[s]));
    }
    let c = ci(dot(&report.v_star.values, env.rho()), report.sigma_chi);
    out.chi_hit = c.contains(truth.chi);
    out.chi_len = c.length();
    Some(out)
}

/// Approximate-VI intervals on the representative-set fixed point.
pub fn approx_intervals(
    env: &Mdp,
    emp: &EmpiricalModel,
    map: &GeneralizationMap<f64>,
    truth: &Truth,
    alpha: f64,
) -> Option<IntervalOutcome> {
    let params = representative_params(emp, env.gamma(), map.set()).ok()?;
    let cov = approx_q_covariance(&params, &emp.w_hat, map, &inference_opts()).ok()?;
    let n = emp.n;
    let ci = |x: f64, var: f64| {
        confidence_interval(x, var.max(0.0), n, alpha).expect("valid interval inputs")
    };
    let q = cov.solution.q.as_slice();
    let m_a = env.m_a();
    let sigma_v = cov.value_covariance();
    let v: Vec<f64> = cov
        .actions
        .iter()
        .enumerate()
        .map(|(s, &a)| q[s * m_a + a])
        .collect();
    let mut out = IntervalOutcome {
        q_hit: Vec::with_capacity(q.len()),
        v_hit: Vec::with_capacity(v.len()),
        chi_hit: false,
        q_len: Vec::with_capacity(q.len()),
        chi_len: 0.0,
    };
    for (k, &qk) in q.iter().enumerate() {
        let c = ci(qk, cov.sigma[(k, k)]);
        out.q_hit.push(c.contains(truth.q[k]));
        out.q_len.push(c.length());
    }
    for (s, &vs) in v.iter().enumerate() {
        out.v_hit.push(ci(vs, sigma_v[(s, s)]).contains(truth.v[s]));
    }
    let rho = env.rho();
    let c = ci(dot(&v, rho), dot(rho, &sigma_v.mul_vec(rho)));
    out.chi_hit = c.contains(truth.chi);
    out.chi_len = c.length();
    Some(out)
}

fn proportion_row(
    experiment: &str,
    label: &str,
    n: u64,
    quantity: String,
    hits: &[f64],
    na: usize,
) -> ResultRow {
    let valid = hits.len();
    let p = if valid == 0 {
        f64::NAN
    } else {
        hits.iter().sum::<f64>() / valid as f64
    };
    ResultRow {
        experiment: experiment.into(),
        label: label.into(),
        n: Some(n),
        quantity,
        estimate: p,
        half_width: Some(proportion_half_width(p, valid)),
        valid,
        na,
    }
}

fn mean_row(
    experiment: &str,
    label: &str,
    n: u64,
    quantity: String,
    xs: &[f64],
    na: usize,
) -> ResultRow {
    let (m, hw) = mean_half_width(xs);
    ResultRow {
        experiment: experiment.into(),
        label: label.into(),
        n: Some(n),
        quantity,
        estimate: m,
        half_width: Some(hw),
        valid: xs.len(),
        na,
    }
}

fn bool_to_f64(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Which interval summaries to emit.
#[derive(Debug, Clone, Copy)]
struct IntervalRows {
    per_pair: bool,
    lengths: bool,
}

fn interval_rows(
    t: &mut ResultTable,
    experiment: &str,
    label: &str,
    n: u64,
    outcomes: &[Option<IntervalOutcome>],
    m_a: usize,
    which: IntervalRows,
) {
    let ok: Vec<&IntervalOutcome> = outcomes.iter().flatten().collect();
    let na = outcomes.len() - ok.len();
    let col = |f: &dyn Fn(&IntervalOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<f64>>();
    t.push(proportion_row(
        experiment,
        label,
        n,
        "q_avg_coverage".into(),
        &col(&|o| o.q_coverage()),
        na,
    ));
    t.push(proportion_row(
        experiment,
        label,
        n,
        "v_avg_coverage".into(),
        &col(&|o| o.v_coverage()),
        na,
    ));
    t.push(proportion_row(
        experiment,
        label,
        n,
        "chi_coverage".into(),
        &col(&|o| bool_to_f64(o.chi_hit)),
        na,
    ));
    if which.lengths {
        t.push(mean_row(
            experiment,
            label,
            n,
            "q_avg_ci_length".into(),
            &col(&|o| o.mean_q_len()),
            na,
        ));
        t.push(mean_row(
            experiment,
            label,
            n,
            "chi_ci_length".into(),
            &col(&|o| o.chi_len),
            na,
        ));
    }
    if which.per_pair {
        if let Some(first) = ok.first() {
            for k in 0..first.q_hit.len() {
                let name = format!("q_coverage_s{}_a{}", k / m_a, k % m_a);
                t.push(proportion_row(
                    experiment,
                    label,
                    n,
                    name,
                    &col(&|o| bool_to_f64(o.q_hit[k])),
                    na,
                ));
            }
            for s in 0..first.v_hit.len() {
                let name = format!("v_coverage_s{s}");
                t.push(proportion_row(
                    experiment,
                    label,
                    n,
                    name,
                    &col(&|o| bool_to_f64(o.v_hit[s])),
                    na,
                ));
            }
        }
    }
}

/// Coverage of plug-in intervals for `Q`, `V*` and `chi*` under a fixed
/// exploration policy, exact or on a representative set.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    let env = cfg.build_env()?;
    let policy_spec = cfg
        .policy
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("coverage needs a [policy]".into()))?;
    let policy = policy_spec.build(env.m_s(), env.m_a())?;
    let map = match &cfg.approx {
        Some(a) => Some(a.build(env.m_s(), env.m_a())?),
        None => None,
    };
    let truth = match &map {
        Some(m) => Truth::approximate(&env, m)?,
        None => Truth::exact(&env)?,
    };
    let label = match policy_spec {
        crate::config::PolicySpec::Random { p_right } => format!("RE({p_right})"),
        crate::config::PolicySpec::Uniform => "uniform".into(),
        crate::config::PolicySpec::Table { .. } => "table".into(),
    };
    let sim = Simulator::new(&env);
    let mut t = ResultTable::default();
    for (i, &n) in cfg.budgets().iter().enumerate() {
        let outcomes: Vec<Option<IntervalOutcome>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(cfg.seed, rep, i, 0);
                let mut data = TrajectoryDataset::stats_only(env.m_s(), env.m_a());
                sim.run(&policy, n as usize, None, &mut data, &mut rng);
                let emp: EmpiricalModel = empirical_model(&data);
                match &map {
                    Some(m) => approx_intervals(&env, &emp, m, &truth, cfg.alpha),
                    None => exact_intervals(&env, &emp, &truth, cfg.alpha),
                }
            })
            .collect();
        interval_rows(
            &mut t,
            "coverage",
            &label,
            n,
            &outcomes,
            env.m_a(),
            IntervalRows {
                per_pair: true,
                lengths: true,
            },
        );
    }
    Ok(t)
}

/// Splits `n` into a warm-start batch and `stages - 1` equal batches
/// (earlier batches take the remainder).
pub fn stage_batches(n: usize, stages: usize, warm_fraction: f64) -> Vec<usize> {
    if stages <= 1 {
        return vec![n];
    }
    let warm = ((n as f64) * warm_fraction).round() as usize;
    let rest = n - warm.min(n);
    let k = stages - 1;
    let mut out = vec![warm.min(n)];
    out.extend((0..k).map(|i| rest / k + usize::from(i < rest % k)));
    out
}

/// `RE(p_right)` on two-action models, uniform otherwise.
pub fn explore_policy(m_s: usize, m_a: usize, p_right: f64) -> Policy {
    if m_a == 2 {
        random_explore_policy(m_s, p_right)
    } else {
        Policy::uniform(m_s, m_a)
    }
}

/// Why a replication produced no estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentFailure {
    Unvisited,
    Solver(String),
}

/// Runs one agent for a total budget `n` under the two-stage protocol:
/// `warm.fraction * n` steps of `RE(warm.p_right)` and the rest under the
/// agent. Q-OCBA with `stages = K` uses the warm batch as its first stage.
pub fn run_agent(
    env: &Mdp,
    agent: &AgentSpec,
    n: usize,
    warm: WarmStart,
    rng: &mut StreamRng,
) -> Result<TrajectoryDataset, AgentFailure> {
    let (m_s, m_a) = (env.m_s(), env.m_a());
    let warm_policy = explore_policy(m_s, m_a, warm.p_right);
    let sim = Simulator::new(env);
    if let AgentKind::Qocba {
        objective,
        stages,
        eta,
    } = agent.kind
    {
        let opts = QocbaOptions {
            eta,
            objective: match objective {
                ObjectiveSpec::WorstDiscrepancy => QocbaObjective::WorstDiscrepancy,
                ObjectiveSpec::ChiVariance => QocbaObjective::ChiVariance,
            },
            ..QocbaOptions::default()
        };
        let batches = stage_batches(n, stages, warm.fraction);
        return match run_qocba(env, stages, &batches, &warm_policy, &opts, rng) {
            Ok(out) => Ok(out.data),
            Err(QocbaError::Unvisited(..)) => Err(AgentFailure::Unvisited),
            Err(e) => Err(AgentFailure::Solver(e.to_string())),
        };
    }
    let batches = stage_batches(n, 2, warm.fraction);
    let mut data = TrajectoryDataset::stats_only(m_s, m_a);
    sim.run(&warm_policy, batches[0], None, &mut data, rng);
    let mut explorer = match &agent.kind {
        AgentKind::Random { p_right } => {
            ExplorationAgent::RandomExplore(explore_policy(m_s, m_a, *p_right))
        }
        AgentKind::EpsGreedy {
            eps,
            refresh_fraction,
        } => {
            let mut a = EpsGreedyAgent::new(*eps, env.gamma());
            a.refresh_fraction = *refresh_fraction;
            ExplorationAgent::EpsGreedy(a)
        }
        AgentKind::Psrl {
            episodes,
            prior_mean,
            prior_var,
        } => {
            let obs_var = env.params().sigma2_r.clone();
            ExplorationAgent::Psrl {
                agent: PsrlAgent::new(m_s, m_a, env.gamma(), obs_var, *prior_mean, *prior_var),
                episodes: *episodes,
            }
        }
        AgentKind::Qocba { .. } => unreachable!("handled above"),
    };
    explorer.run(&sim, batches[1], &mut data, rng);
    Ok(data)
}

/// Final-estimate summary of one agent replication.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub correct: bool,
    pub intervals: Option<IntervalOutcome>,
}

pub fn evaluate_agent_run(
    env: &Mdp,
    data: &TrajectoryDataset,
    truth: &Truth,
    alpha: f64,
) -> Option<AgentOutcome> {
    let emp: EmpiricalModel = empirical_model(data);
    let params = emp.params(env.gamma()).ok()?;
    let q = solve_q(&params, SOLVE_TOL, SOLVE_MAX_ITER).ok()?;
    let (actions, _) = greedy_actions(&q, 0.0);
    Some(AgentOutcome {
        correct: actions == truth.actions,
        intervals: exact_intervals(env, &emp, truth, alpha),
    })
}

fn agent_outcomes(
    cfg: &ExperimentConfig,
    env: &Mdp,
    truth: &Truth,
    n_index: usize,
    n: u64,
    agent_index: usize,
    agent: &AgentSpec,
) -> Vec<Option<AgentOutcome>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(cfg.seed, rep, n_index, agent_index);
            let data = run_agent(env, agent, n as usize, cfg.warm_start, &mut rng).ok()?;
            evaluate_agent_run(env, &data, truth, cfg.alpha)
        })
        .collect()
}

fn agent_experiment(
    cfg: &ExperimentConfig,
    selection: bool,
    intervals: bool,
) -> Result<ResultTable, RunError> {
    let env = cfg.build_env()?;
    let truth = Truth::exact(&env)?;
    let name = cfg.kind.name();
    let mut t = ResultTable::default();
    for (i, &n) in cfg.budgets().iter().enumerate() {
        for (j, agent) in cfg.agents.iter().enumerate() {
            let label = agent.label();
            let outcomes = agent_outcomes(cfg, &env, &truth, i, n, j, agent);
            if selection {
                let ok: Vec<f64> = outcomes
                    .iter()
                    .flatten()
                    .map(|o| bool_to_f64(o.correct))
                    .collect();
                let na = outcomes.len() - ok.len();
                t.push(proportion_row(
                    name,
                    &label,
                    n,
                    "correct_selection".into(),
                    &ok,
                    na,
                ));
            }
            if intervals {
                let iv: Vec<Option<IntervalOutcome>> = outcomes
                    .into_iter()
                    .map(|o| o.and_then(|o| o.intervals))
                    .collect();
                interval_rows(
                    &mut t,
                    name,
                    &label,
                    n,
                    &iv,
                    env.m_a(),
                    IntervalRows {
                        per_pair: false,
                        lengths: true,
                    },
                );
            }
        }
    }
    Ok(t)
}

/// Proportion of replications whose final greedy policy is optimal at every
/// state, per agent and budget.
pub fn correct_selection_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    agent_experiment(cfg, true, false)
}

/// Average `Q` and `chi*` interval lengths and coverages, per agent.
pub fn ci_length_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    agent_experiment(cfg, false, true)
}

/// Q-OCBA agents only, with both selection and interval summaries.
pub fn qocba_run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    agent_experiment(cfg, true, true)
}
