//! TOML model definition files.
//!
//! ```toml
//! m_s = 2
//! m_a = 2
//! gamma = 0.9
//! rho = [0.5, 0.5]
//!
//! # exactly one [[pair]] per (s, a), 0-based; flat index k = s * m_a + a
//! [[pair]]
//! s = 0
//! a = 0
//! next = [0.25, 0.75]                         # P(. | s, a), must sum to 1 within 1e-9
//! reward = { kind = "gaussian", mean = 1.0, variance = 0.5 }
//! cost = { kind = "deterministic", value = 0.2 }   # only for constrained models
//!
//! [constraint]                                 # optional
//! budget = 4.0
//! ```
//!
//! Reward kinds: `deterministic { value }`, `gaussian { mean, variance }`,
//! `bernoulli { scale, p }` (value `scale` with probability `p`, else 0).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, RewardSpec, TabularMdp};
use crate::scalar::Real;

/// Stochastic rows in a file must sum to one within this tolerance; they
/// are renormalised exactly afterwards.
pub const FILE_ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardEntry {
    Deterministic { value: f64 },
    Gaussian { mean: f64, variance: f64 },
    Bernoulli { scale: f64, p: f64 },
}

impl RewardEntry {
    pub fn to_spec<T: Real>(self) -> RewardSpec<T> {
        match self {
            RewardEntry::Deterministic { value } => RewardSpec::Deterministic {
                value: T::lit(value),
            },
            RewardEntry::Gaussian { mean, variance } => RewardSpec::Gaussian {
                mean: T::lit(mean),
                variance: T::lit(variance),
            },
            RewardEntry::Bernoulli { scale, p } => RewardSpec::Bernoulli {
                scale: T::lit(scale),
                p: T::lit(p),
            },
        }
    }

    pub fn from_spec<T: Real>(spec: &RewardSpec<T>) -> Self {
        match *spec {
            RewardSpec::Deterministic { value } => RewardEntry::Deterministic {
                value: value.as_f64(),
            },
            RewardSpec::Gaussian { mean, variance } => RewardEntry::Gaussian {
                mean: mean.as_f64(),
                variance: variance.as_f64(),
            },
            RewardSpec::Bernoulli { scale, p } => RewardEntry::Bernoulli {
                scale: scale.as_f64(),
                p: p.as_f64(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub s: usize,
    pub a: usize,
    pub next: Vec<f64>,
    pub reward: RewardEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<RewardEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub budget: f64,
}

/// Raw file contents, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub m_s: usize,
    pub m_a: usize,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub pair: Vec<PairEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintEntry>,
}

/// A validated model plus the optional constrained-MDP extension.
#[derive(Debug, Clone)]
pub struct MdpDefinition<T> {
    pub mdp: TabularMdp<T>,
    pub costs: Option<Vec<RewardSpec<T>>>,
    pub budget: Option<T>,
}

fn normalized(row: &[f64], what: &str) -> Result<Vec<f64>, ModelFileError> {
    if let Some(x) = row.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(ModelFileError::Invalid(format!(
            "{what}: entry {x} is not a probability"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > FILE_ROW_TOLERANCE {
        return Err(ModelFileError::Invalid(format!(
            "{what}: sums to {sum}, not 1 within {FILE_ROW_TOLERANCE:e}"
        )));
    }
    Ok(row.iter().map(|x| x / sum).collect())
}

impl MdpFile {
    pub fn parse(text: &str) -> Result<Self, ModelFileError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serialises")
    }

    pub fn build<T: Real>(&self) -> Result<MdpDefinition<T>, ModelFileError> {
        let (m_s, m_a) = (self.m_s, self.m_a);
        if m_s == 0 || m_a == 0 {
            return Err(ModelFileError::Invalid(
                "m_s and m_a must be positive".into(),
            ));
        }
        let n = m_s * m_a;
        let mut slots: Vec<Option<&PairEntry>> = vec![None; n];
        for entry in &self.pair {
            if entry.s >= m_s || entry.a >= m_a {
                return Err(ModelFileError::Invalid(format!(
                    "pair (s={}, a={}) out of range",
                    entry.s, entry.a
                )));
            }
            let k = entry.s * m_a + entry.a;
            if slots[k].replace(entry).is_some() {
                return Err(ModelFileError::Invalid(format!(
                    "pair (s={}, a={}) defined twice",
                    entry.s, entry.a
                )));
            }
        }
        let mut transition = Vec::with_capacity(n * m_s);
        let mut rewards = Vec::with_capacity(n);
        let mut costs = Vec::with_capacity(n);
        for (k, slot) in slots.iter().enumerate() {
            let entry = slot.ok_or_else(|| {
                ModelFileError::Invalid(format!("pair (s={}, a={}) missing", k / m_a, k % m_a))
            })?;
            if entry.next.len() != m_s {
                return Err(ModelFileError::Invalid(format!(
                    "pair (s={}, a={}): next has {} entries, expected {m_s}",
                    entry.s,
                    entry.a,
                    entry.next.len()
                )));
            }
            let row = normalized(
                &entry.next,
                &format!("transition row of (s={}, a={})", entry.s, entry.a),
            )?;
            transition.extend(row.into_iter().map(T::lit));
            rewards.push(entry.reward.to_spec());
            costs.push(entry.cost.map(RewardEntry::to_spec));
        }
        if self.rho.len() != m_s {
            return Err(ModelFileError::Invalid(format!(
                "rho has {} entries, expected {m_s}",
                self.rho.len()
            )));
        }
        let rho = normalized(&self.rho, "rho")?
            .into_iter()
            .map(T::lit)
            .collect();
        let mdp = TabularMdp::new(m_s, m_a, T::lit(self.gamma), rewards, transition, rho)?;

        let any_cost = costs.iter().any(Option::is_some);
        let costs = if any_cost {
            let all: Option<Vec<_>> = costs.into_iter().collect();
            let all = all.ok_or_else(|| {
                ModelFileError::Invalid("cost given for some pairs but not all".into())
            })?;
            for c in &all {
                c.validate()?;
            }
            Some(all)
        } else {
            None
        };
        Ok(MdpDefinition {
            mdp,
            costs,
            budget: self.constraint.map(|c| T::lit(c.budget)),
        })
    }

    /// Serialisable description of an in-memory model.
    pub fn from_mdp<T: Real>(
        mdp: &TabularMdp<T>,
        costs: Option<&[RewardSpec<T>]>,
        budget: Option<T>,
    ) -> Self {
        let p = mdp.params();
        let pair = (0..p.n_pairs())
            .map(|k| PairEntry {
                s: k / p.m_a,
                a: k % p.m_a,
                next: p.transition_row(k).iter().map(|x| x.as_f64()).collect(),
                reward: RewardEntry::from_spec(&mdp.rewards()[k]),
                cost: costs.map(|c| RewardEntry::from_spec(&c[k])),
            })
            .collect();
        Self {
            m_s: p.m_s,
            m_a: p.m_a,
            gamma: p.gamma.as_f64(),
            rho: mdp.rho().iter().map(|x| x.as_f64()).collect(),
            pair,
            constraint: budget.map(|b| ConstraintEntry { budget: b.as_f64() }),
        }
    }
}

pub fn parse_mdp<T: Real>(text: &str) -> Result<MdpDefinition<T>, ModelFileError> {
    MdpFile::parse(text)?.build()
}

pub fn load_mdp<T: Real>(path: impl AsRef<Path>) -> Result<MdpDefinition<T>, ModelFileError> {
    parse_mdp(&std::fs::read_to_string(path)?)
}
