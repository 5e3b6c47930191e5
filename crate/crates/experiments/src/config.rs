//! Experiment configuration files (TOML).
//!
//! ```toml
//! kind = "coverage"            # solve | coverage | correct-selection | ci-length | qocba-run
//! seed = 7
//! replications = 1000
//! n = [10000, 50000]           # one budget or a list
//! alpha = 0.05
//! output = "coverage.csv"      # relative to the config file
//!
//! [env.riverswim]              # or: [env] model = "fix_a.toml"
//! m_s = 6
//! r_l = 1.0
//!
//! [policy]                     # coverage only
//! kind = "random"
//! p_right = 0.8
//!
//! [approx]                     # coverage only, optional
//! stride = 3                   # or: states = [0, 3, 6]
//!
//! [warm_start]                 # agent experiments
//! fraction = 0.3
//! p_right = 0.6
//!
//! [[agents]]
//! kind = "qocba"               # qocba | random | eps-greedy | psrl
//! objective = "worst-discrepancy"
//! ```

use std::path::{Path, PathBuf};

use qinfer_core::approx_vi::{interp_jacobian, GeneralizationMap, RepresentativeSet};
use qinfer_core::baselines::random_explore_policy;
use qinfer_core::model_file::load_mdp;
use qinfer_core::{Mdp, Policy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::riverswim::{build_riverswim, RiverSwimSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Coverage,
    CorrectSelection,
    CiLength,
    QocbaRun,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::CorrectSelection => "correct-selection",
            ExperimentKind::CiLength => "ci-length",
            ExperimentKind::QocbaRun => "qocba-run",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budgets {
    One(u64),
    Many(Vec<u64>),
}

impl Budgets {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Budgets::One(n) => vec![*n],
            Budgets::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub riverswim: Option<RiverSwimSpec>,
    /// Model file, relative to the config file.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    /// `pi(1|s) = p_right` (two-action models).
    Random {
        p_right: f64,
    },
    Uniform,
    /// Row-major `m_s x m_a` probabilities.
    Table {
        probs: Vec<f64>,
    },
}

impl PolicySpec {
    pub fn build(&self, m_s: usize, m_a: usize) -> Result<Policy, ConfigError> {
        match self {
            PolicySpec::Random { p_right } => {
                if m_a != 2 {
                    return Err(ConfigError::Invalid(
                        "random policy needs a two-action model".into(),
                    ));
                }
                if !(0.0..=1.0).contains(p_right) {
                    return Err(ConfigError::Invalid(format!(
                        "p_right = {p_right} is not a probability"
                    )));
                }
                Ok(random_explore_policy(m_s, *p_right))
            }
            PolicySpec::Uniform => Ok(Policy::uniform(m_s, m_a)),
            PolicySpec::Table { probs } => Policy::from_flat(m_s, m_a, probs.clone())
                .map_err(|e| ConfigError::Invalid(format!("policy table: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSpec {
    pub stride: Option<usize>,
    pub states: Option<Vec<usize>>,
}

impl ApproxSpec {
    pub fn build(&self, m_s: usize, m_a: usize) -> Result<GeneralizationMap<f64>, ConfigError> {
        let set = match (self.stride, &self.states) {
            (Some(stride), None) => RepresentativeSet::stride(m_s, stride),
            (None, Some(states)) => RepresentativeSet::new(m_s, states.clone()),
            _ => {
                return Err(ConfigError::Invalid(
                    "approx needs exactly one of stride or states".into(),
                ))
            }
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        interp_jacobian(m_s, m_a, &set).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStart {
    pub fraction: f64,
    pub p_right: f64,
}

impl Default for WarmStart {
    fn default() -> Self {
        Self {
            fraction: 0.3,
            p_right: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    #[default]
    WorstDiscrepancy,
    ChiVariance,
}

fn default_stages() -> usize {
    2
}

fn default_eta() -> f64 {
    qinfer_core::qocba::DEFAULT_ETA
}

fn default_refresh() -> f64 {
    0.1
}

fn default_episodes() -> usize {
    100
}

fn default_prior_var() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentKind {
    Qocba {
        #[serde(default)]
        objective: ObjectiveSpec,
        #[serde(default = "default_stages")]
        stages: usize,
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Random {
        p_right: f64,
    },
    EpsGreedy {
        eps: f64,
        #[serde(default = "default_refresh")]
        refresh_fraction: f64,
    },
    Psrl {
        #[serde(default = "default_episodes")]
        episodes: usize,
        #[serde(default)]
        prior_mean: f64,
        #[serde(default = "default_prior_var")]
        prior_var: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub kind: AgentKind,
}

impl AgentSpec {
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.kind {
            AgentKind::Qocba { objective, .. } => match objective {
                ObjectiveSpec::WorstDiscrepancy => "Q-OCBA".into(),
                ObjectiveSpec::ChiVariance => "Q-OCBA-chi".into(),
            },
            AgentKind::Random { p_right } => format!("RE({p_right})"),
            AgentKind::EpsGreedy { eps, .. } => format!("eps-greedy({eps})"),
            AgentKind::Psrl { episodes, .. } => format!("PSRL({episodes})"),
        }
    }
}

fn default_replications() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub n: Option<Budgets>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub approx: Option<ApproxSpec>,
    #[serde(default)]
    pub warm_start: WarmStart,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.replications == 0 {
            return invalid("replications must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        match (&self.env.riverswim, &self.env.model) {
            (Some(_), Some(_)) => return invalid("env takes either riverswim or model, not both"),
            (None, None) => return invalid("env needs riverswim or model"),
            _ => {}
        }
        if self.kind != ExperimentKind::Solve {
            let n = self.budgets();
            if n.is_empty() || n.contains(&0) {
                return invalid("n must be given and >= 1");
            }
        }
        match self.kind {
            ExperimentKind::Solve => {}
            ExperimentKind::Coverage => {
                if self.policy.is_none() {
                    return invalid("coverage needs a [policy]");
                }
            }
            ExperimentKind::CorrectSelection
            | ExperimentKind::CiLength
            | ExperimentKind::QocbaRun => {
                if self.agents.is_empty() {
                    return invalid("agent experiments need at least one [[agents]] entry");
                }
                let w = self.warm_start;
                if !(0.0..1.0).contains(&w.fraction) || !(0.0..=1.0).contains(&w.p_right) {
                    return invalid("warm_start fraction must lie in [0,1) and p_right in [0,1]");
                }
                if self.kind == ExperimentKind::QocbaRun
                    && self
                        .agents
                        .iter()
                        .any(|a| !matches!(a.kind, AgentKind::Qocba { .. }))
                {
                    return invalid("qocba-run takes only qocba agents");
                }
                for a in &self.agents {
                    match a.kind {
                        AgentKind::Qocba { stages, eta, .. } if stages == 0 || !(eta > 0.0) => {
                            return invalid("qocba needs stages >= 1 and eta > 0")
                        }
                        AgentKind::EpsGreedy {
                            eps,
                            refresh_fraction,
                        } if !(0.0..=1.0).contains(&eps)
                            || !(refresh_fraction > 0.0 && refresh_fraction <= 1.0) =>
                        {
                            return invalid(
                                "eps-greedy needs eps in [0,1] and refresh_fraction in (0,1]",
                            )
                        }
                        AgentKind::Random { p_right } if !(0.0..=1.0).contains(&p_right) => {
                            return invalid("random agent needs p_right in [0,1]")
                        }
                        AgentKind::Psrl {
                            episodes,
                            prior_var,
                            ..
                        } if episodes == 0 || !(prior_var > 0.0) => {
                            return invalid("psrl needs episodes >= 1 and prior_var > 0")
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    pub fn budgets(&self) -> Vec<u64> {
        self.n.as_ref().map(Budgets::to_vec).unwrap_or_default()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The environment, plus its cost table when the model file has one.
    pub fn build_env(&self) -> Result<Mdp, ConfigError> {
        match (&self.env.riverswim, &self.env.model) {
            (Some(spec), None) => {
                build_riverswim(spec).map_err(|e| ConfigError::Invalid(format!("riverswim: {e}")))
            }
            (None, Some(path)) => {
                let def = load_mdp::<f64>(self.resolve(path))
                    .map_err(|e| ConfigError::Invalid(format!("model: {e}")))?;
                Ok(def.mdp)
            }
            _ => Err(ConfigError::Invalid("env needs riverswim or model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_example() {
        let text = r#"
kind = "correct-selection"
seed = 3
replications = 10
n = [1000, 10000]

[env.riverswim]
m_s = 6
r_l = 3.0

[warm_start]
fraction = 0.3
p_right = 0.6

[[agents]]
kind = "qocba"

[[agents]]
kind = "random"
p_right = 0.6

[[agents]]
kind = "eps-greedy"
eps = 0.1

[[agents]]
kind = "psrl"
episodes = 100
label = "PSRL(100)"
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.budgets(), vec![1000, 10000]);
        assert_eq!(cfg.env.riverswim.as_ref().unwrap().r_l, 3.0);
        let labels: Vec<String> = cfg.agents.iter().map(AgentSpec::label).collect();
        assert_eq!(
            labels,
            ["Q-OCBA", "RE(0.6)", "eps-greedy(0.1)", "PSRL(100)"]
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("kind = \"coverage\"\nn = 10\n[env.riverswim]\n").is_err());
        assert!(ExperimentConfig::parse("kind = \"nope\"").is_err());
        let zero_reps = "kind = \"solve\"\nreplications = 0\n[env.riverswim]\n";
        assert!(matches!(
            ExperimentConfig::parse(zero_reps),
            Err(ConfigError::Invalid(_))
        ));
        let single =
            "kind = \"coverage\"\nn = 100\n[env.riverswim]\n[policy]\nkind = \"uniform\"\n";
        assert_eq!(
            ExperimentConfig::parse(single).unwrap().budgets(),
            vec![100]
        );
    }
}
