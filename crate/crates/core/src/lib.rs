//! Asymptotic inference for tabular MDP Q-value estimates and the
//! variance-driven exploration allocation built on it.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which the experiments use throughout.

pub mod approx_vi;
pub mod baselines;
pub mod constrained;
pub mod estimation;
pub mod fixtures;
pub mod inference;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod model_file;
pub mod qocba;
pub mod rng;
pub mod scalar;

pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Mdp = mdp::TabularMdp<f64>;
pub type Params = mdp::MdpParams<f64>;
pub type QTable = mdp::QTable<f64>;
pub type Policy = mdp::Policy<f64>;
pub type ValueVector = mdp::ValueVector<f64>;
pub type RewardSpec = mdp::RewardSpec<f64>;
pub type ConstrainedMdp = constrained::ConstrainedMdp<f64>;
pub type EmpiricalModel = estimation::EmpiricalModel<f64>;

pub type Mdp32 = mdp::TabularMdp<f32>;
pub type QTable32 = mdp::QTable<f32>;
