//! Constrained fuel-optimal control of a power-split hybrid under
//! observation perturbations.
//!
//! - [`drivecycle`]: reference speed traces (bundled NEDC).
//! - [`powertrain`]: the plant, reward (negative fuel), SOC corridor and cost.
//! - [`nn`]: MLPs with parameter and input gradients, Gaussian policy, optimizers.
//! - [`attacks`]: uniform, MC, MR, MAD and AMAD observation attackers.
//! - [`train`]: PPO-Lagrangian with vanilla, adversarial and KL-regularized regimes.
//! - [`tabular`]: brute-force certification of attack bounds on small CMDPs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod checkpoint;
pub mod drivecycle;
pub mod nn;
pub mod powertrain;
pub mod rng;
pub mod tabular;
pub mod train;
