//! Small reference models used by tests, examples and the acceptance suite.

use crate::constrained::ConstrainedMdp;
use crate::mdp::{RewardSpec, TabularMdp};
use crate::model_file::parse_mdp;
use crate::scalar::Real;

/// Text of the committed 3-state, 2-action random model.
pub const FIX_D_TOML: &str = include_str!("../fixtures/fix_d.toml");
/// Text of the committed 2-state constrained model with a binding budget.
pub const FIX_E_TOML: &str = include_str!("../fixtures/fix_e.toml");

/// One state, one action, deterministic reward 1, self loop.
pub fn fix_a(gamma: f64) -> TabularMdp<f64> {
    fix_a_generic(gamma)
}

pub fn fix_a_generic<T: Real>(gamma: f64) -> TabularMdp<T> {
    TabularMdp::new(
        1,
        1,
        T::lit(gamma),
        vec![RewardSpec::Deterministic { value: T::one() }],
        vec![T::one()],
        vec![T::one()],
    )
    .expect("valid fixture")
}

/// Two states, two actions, deterministic moves (`a0` to state 0, `a1` to
/// state 1) and rewards `(1, 0; 0, 2)`, `gamma = 0.9`.
pub fn fix_b() -> TabularMdp<f64> {
    let d = |value: f64| RewardSpec::Deterministic { value };
    TabularMdp::new(
        2,
        2,
        0.9,
        vec![d(1.0), d(0.0), d(0.0), d(2.0)],
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        vec![0.5, 0.5],
    )
    .expect("valid fixture")
}

/// Two states, one action, deterministic swap, unit Gaussian rewards.
pub fn fix_c() -> TabularMdp<f64> {
    let g = RewardSpec::Gaussian {
        mean: 0.0,
        variance: 1.0,
    };
    TabularMdp::new(
        2,
        1,
        0.9,
        vec![g, g],
        vec![0.0, 1.0, 1.0, 0.0],
        vec![0.5, 0.5],
    )
    .expect("valid fixture")
}

/// Committed random 3-state, 2-action model with Gaussian rewards, `gamma = 0.9`.
pub fn fix_d() -> TabularMdp<f64> {
    fix_d_generic()
}

pub fn fix_d_generic<T: Real>() -> TabularMdp<T> {
    parse_mdp(FIX_D_TOML).expect("committed fixture parses").mdp
}

/// Two-state, two-action constrained model whose budget binds, so the
/// optimum randomizes at one state. Use [`ConstrainedMdp::with_budget`] for
/// the slack variant.
pub fn fix_e() -> ConstrainedMdp<f64> {
    fix_e_generic()
}

pub fn fix_e_generic<T: Real>() -> ConstrainedMdp<T> {
    let def = parse_mdp(FIX_E_TOML).expect("committed fixture parses");
    let costs = def.costs.expect("fixture has costs");
    let budget = def.budget.expect("fixture has a budget");
    ConstrainedMdp::new(def.mdp, costs, budget).expect("valid fixture")
}
