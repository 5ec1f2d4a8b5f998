//! PPO-Lagrangian training under observation perturbations.
//!
//! A [`Trainer`] runs one of the seven [`Method`]s. Perturbed-regime methods
//! (vanilla, random, ADV) roll out and update on what the attacked policy
//! saw; smoothed-regime methods (SA) roll out cleanly and add a KL penalty
//! between clean and attacked action distributions. All methods train the
//! state-value critics used for advantages and the action-value critics the
//! gradient attackers need.

mod agent;
mod config;
pub mod critics;
mod eval;
pub mod loss;
pub mod rollout;
mod trainer;

pub use agent::{Agent, NetworkConfig, ACT_DIM, OBS_DIM};
pub use config::{epsilon_schedule, lambda_update, LagrangianState, Method, Regime, TrainConfig};
pub use eval::{
    evaluate, evaluate_all, mean_std, run_episode, summarize, ConditionResult, ConditionSummary, EpisodeOutcome,
    EvalConfig,
};
pub use loss::{clipped_surrogate, kl_smoothing, pessimistic_surrogate, ppo_lagrangian_loss, LossOutput, PolicyBatch};
pub use rollout::{collect_rollout, discounted_returns, gae, RolloutBatch, RolloutRngs, RolloutSpec};
pub use trainer::{episode_means, reward_diverged, EpochStats, Optimizers, Trainer, TrainerRngs};

use thiserror::Error;

use crate::attacks::AttackError;
use crate::checkpoint::Checkpoint;
use crate::nn::NnError;
use crate::powertrain::PowertrainError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] PowertrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        checkpoint: Box<Checkpoint>,
    },
}
