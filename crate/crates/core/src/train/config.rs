use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;

use super::TrainError;

/// Optimization and schedule knobs shared by every training method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Passes over the batch per epoch for the actor and each critic.
    pub update_iters: usize,
    pub minibatch_size: usize,
    /// Weight of the smoothness regularizer (SA-PPOL only).
    pub kl_weight: f64,
    pub epsilon_final: f64,
    /// Fraction of the run over which ε ramps linearly up to `epsilon_final`.
    pub epsilon_ramp: f64,
    /// Limit on the undiscounted episode cost.
    pub kappa: f64,
    pub lambda_init: f64,
    pub lambda_lr: f64,
    /// Divide the actor loss by `1 + λ`.
    pub lambda_loss_scaling: bool,
    /// Target-network averaging rate: `target ← (1 − τ)·target + τ·online`.
    pub polyak_tau: f64,
    pub init_log_std: f64,
    /// Squashed action the freshly initialized policy takes everywhere.
    pub init_action: f64,
    pub max_grad_norm: f64,
    /// Episodes start at `B + U(−j, j)`.
    pub initial_soc_jitter: f64,
    /// Critic mean-squared error above which a run is declared diverged.
    pub critic_loss_limit: f64,
    /// Multipliers applied to rewards and costs before they reach the
    /// critics and advantages. Reported metrics and the dual step use raw
    /// values.
    pub reward_scale: f64,
    pub cost_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            epochs: 150,
            steps_per_epoch: 2400,
            update_iters: 10,
            minibatch_size: 256,
            kl_weight: 1.0,
            epsilon_final: 0.015,
            epsilon_ramp: 0.5,
            kappa: 2.0,
            lambda_init: 0.0,
            lambda_lr: 0.05,
            lambda_loss_scaling: true,
            polyak_tau: 0.005,
            init_log_std: -0.5,
            init_action: 0.05,
            max_grad_norm: 0.5,
            initial_soc_jitter: 0.005,
            critic_loss_limit: 1e6,
            reward_scale: 0.01,
            cost_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} must lie in (0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} must lie in [0, 1]", self.gae_lambda));
        }
        if !(self.clip_ratio > 0.0) {
            return bad(format!("clip_ratio {} must be > 0", self.clip_ratio));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.lambda_lr >= 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.update_iters == 0 || self.minibatch_size == 0 {
            return bad("epochs, steps_per_epoch, update_iters and minibatch_size must be ≥ 1".into());
        }
        if !(self.kl_weight >= 0.0) {
            return bad(format!("kl_weight {} must be ≥ 0", self.kl_weight));
        }
        if !(self.epsilon_final >= 0.0) {
            return bad(format!("epsilon_final {} must be ≥ 0", self.epsilon_final));
        }
        if !(self.epsilon_ramp > 0.0 && self.epsilon_ramp <= 1.0) {
            return bad(format!("epsilon_ramp {} must lie in (0, 1]", self.epsilon_ramp));
        }
        if !(self.kappa >= 0.0 && self.lambda_init >= 0.0) {
            return bad("kappa and lambda_init must be ≥ 0".into());
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return bad(format!("polyak_tau {} must lie in (0, 1]", self.polyak_tau));
        }
        if !(self.init_action > 0.0 && self.init_action < 1.0) {
            return bad(format!("init_action {} must lie in (0, 1)", self.init_action));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be > 0".into());
        }
        if !(self.initial_soc_jitter >= 0.0 && self.initial_soc_jitter < 0.5) {
            return bad(format!("initial_soc_jitter {} must lie in [0, 0.5)", self.initial_soc_jitter));
        }
        if !(self.reward_scale > 0.0 && self.cost_scale > 0.0) {
            return bad("reward_scale and cost_scale must be > 0".into());
        }
        if !(self.critic_loss_limit > 0.0) {
            return bad("critic_loss_limit must be > 0".into());
        }
        Ok(())
    }
}

/// Perturbation radius at epoch `n` (1-based): linear ramp, then flat.
pub fn epsilon_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let ramp_end = cfg.epsilon_ramp * cfg.epochs as f64;
    cfg.epsilon_final * (epoch.max(1) as f64 / ramp_end).min(1.0)
}

/// Dual variable of the cost constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambda: f64,
    pub lambda_lr: f64,
    pub kappa: f64,
}

impl LagrangianState {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            lambda: cfg.lambda_init,
            lambda_lr: cfg.lambda_lr,
            kappa: cfg.kappa,
        }
    }

    /// Projected dual ascent on the episode-cost violation.
    pub fn update(self, episode_cost_mean: f64) -> Self {
        Self {
            lambda: (self.lambda + self.lambda_lr * (episode_cost_mean - self.kappa)).max(0.0),
            ..self
        }
    }
}

pub fn lambda_update(lag: LagrangianState, episode_cost_mean: f64) -> LagrangianState {
    lag.update(episode_cost_mean)
}

/// How observations are treated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Rollouts and updates on perturbed observations.
    Perturbed,
    /// Clean rollouts plus a KL smoothness penalty toward perturbed inputs.
    Smoothed,
}

/// The seven training methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PPOL-vanilla")]
    PpolVanilla,
    #[serde(rename = "PPOL-random")]
    PpolRandom,
    #[serde(rename = "SA-PPOL")]
    SaPpol,
    #[serde(rename = "SA-PPOL(MC)")]
    SaPpolMc,
    #[serde(rename = "SA-PPOL(MR)")]
    SaPpolMr,
    #[serde(rename = "ADV-PPOL(MC)")]
    AdvPpolMc,
    #[serde(rename = "ADV-PPOL(MR)")]
    AdvPpolMr,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::PpolVanilla,
        Method::PpolRandom,
        Method::SaPpol,
        Method::SaPpolMc,
        Method::SaPpolMr,
        Method::AdvPpolMc,
        Method::AdvPpolMr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PpolVanilla => "PPOL-vanilla",
            Method::PpolRandom => "PPOL-random",
            Method::SaPpol => "SA-PPOL",
            Method::SaPpolMc => "SA-PPOL(MC)",
            Method::SaPpolMr => "SA-PPOL(MR)",
            Method::AdvPpolMc => "ADV-PPOL(MC)",
            Method::AdvPpolMr => "ADV-PPOL(MR)",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            Method::PpolVanilla => "ppol-vanilla",
            Method::PpolRandom => "ppol-random",
            Method::SaPpol => "sa-ppol",
            Method::SaPpolMc => "sa-ppol-mc",
            Method::SaPpolMr => "sa-ppol-mr",
            Method::AdvPpolMc => "adv-ppol-mc",
            Method::AdvPpolMr => "adv-ppol-mr",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Method::SaPpol | Method::SaPpolMc | Method::SaPpolMr => Regime::Smoothed,
            _ => Regime::Perturbed,
        }
    }

    /// Attacker used while training.
    pub fn training_attack(self) -> AttackKind {
        match self {
            Method::PpolVanilla => AttackKind::None,
            Method::PpolRandom => AttackKind::Uniform,
            Method::SaPpol => AttackKind::Mad,
            Method::SaPpolMc | Method::AdvPpolMc => AttackKind::Mc,
            Method::SaPpolMr | Method::AdvPpolMr => AttackKind::Mr,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.slug() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                TrainError::Config(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}
