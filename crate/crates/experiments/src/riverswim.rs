//! The RiverSwim chain: states `0..m_s` in a row, action 0 swims left,
//! action 1 swims right against the current.
//!
//! Swimming left always moves one state left (staying put at state 0).
//! Swimming right at an interior state slips left, stays or advances with
//! `p_left_slip`, `p_stay`, `p_right_success`. At state 0 the slip mass
//! stays put; at the last state the success mass stays put. The only
//! rewards are `r_l` for swimming left at state 0 and `r_r` for swimming
//! right at the last state.

use qinfer_core::mdp::{MdpError, RewardSpec};
use qinfer_core::Mdp;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiverSwimSpec {
    pub m_s: usize,
    pub p_right_success: f64,
    pub p_stay: f64,
    pub p_left_slip: f64,
    pub r_l: f64,
    pub r_r: f64,
    /// Variance of additive Gaussian noise on every reward; 0 keeps
    /// rewards deterministic.
    pub reward_noise_variance: f64,
    pub gamma: f64,
}

impl Default for RiverSwimSpec {
    fn default() -> Self {
        Self {
            m_s: 6,
            p_right_success: 0.3,
            p_stay: 0.6,
            p_left_slip: 0.1,
            r_l: 1.0,
            r_r: 10.0,
            reward_noise_variance: 0.0,
            gamma: 0.95,
        }
    }
}

impl RiverSwimSpec {
    pub fn with_states(m_s: usize) -> Self {
        Self {
            m_s,
            ..Self::default()
        }
    }

    pub fn with_r_l(mut self, r_l: f64) -> Self {
        self.r_l = r_l;
        self
    }
}

/// The RiverSwim model with uniform initial law.
pub fn build_riverswim(spec: &RiverSwimSpec) -> Result<Mdp, MdpError> {
    let m = spec.m_s;
    if m < 2 {
        return Err(MdpError::InvalidParameter(
            "RiverSwim needs at least 2 states".into(),
        ));
    }
    let probs = [spec.p_left_slip, spec.p_stay, spec.p_right_success];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p))
        || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(MdpError::InvalidProbability(format!(
            "right-action probabilities {probs:?} must form a distribution"
        )));
    }
    if !(spec.reward_noise_variance >= 0.0) {
        return Err(MdpError::InvalidParameter(
            "reward noise variance must be >= 0".into(),
        ));
    }
    let mut p = vec![0.0; 2 * m * m];
    let mut rewards = Vec::with_capacity(2 * m);
    for s in 0..m {
        let left = &mut p[(2 * s) * m..(2 * s + 1) * m];
        left[s.saturating_sub(1)] = 1.0;
        let right = &mut p[(2 * s + 1) * m..(2 * s + 2) * m];
        right[s.saturating_sub(1)] += spec.p_left_slip;
        right[s] += spec.p_stay;
        right[(s + 1).min(m - 1)] += spec.p_right_success;

        let r_left = if s == 0 { spec.r_l } else { 0.0 };
        let r_right = if s == m - 1 { spec.r_r } else { 0.0 };
        for mean in [r_left, r_right] {
            rewards.push(if spec.reward_noise_variance > 0.0 {
                RewardSpec::Gaussian {
                    mean,
                    variance: spec.reward_noise_variance,
                }
            } else {
                RewardSpec::Deterministic { value: mean }
            });
        }
    }
    let rho = vec![1.0 / m as f64; m];
    Mdp::new(m, 2, spec.gamma, rewards, p, rho)
}
