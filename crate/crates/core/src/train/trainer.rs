use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackBudget, AttackConfig, AttackKind, Norm};
use crate::checkpoint::Checkpoint;
use crate::nn::{clip_grad_norm, Adam, Parameters};
use crate::powertrain::HevEnv;
use crate::rng::{stream, Rng, Stream};

use super::critics::{fit_critic, train_q_critic, QData, QSchedule};
use super::loss::{kl_smoothing, ppo_lagrangian_loss, standardize, PolicyBatch};
use super::rollout::{collect_rollout, rows, RolloutBatch, RolloutRngs, RolloutSpec};
use super::{epsilon_schedule, Agent, LagrangianState, Method, NetworkConfig, Regime, TrainConfig, TrainError};

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean undiscounted reward of the episodes completed this epoch.
    pub reward: f64,
    pub cost: f64,
    /// Multiplier after this epoch's dual step.
    pub lambda: f64,
    pub epsilon: f64,
    pub actor_loss: f64,
    pub critic_loss_r: f64,
    pub critic_loss_c: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str = "epoch,reward,cost,lambda,epsilon,actor_loss,critic_loss_r,critic_loss_c";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.reward,
            self.cost,
            self.lambda,
            self.epsilon,
            self.actor_loss,
            self.critic_loss_r,
            self.critic_loss_c
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub policy: Adam,
    pub v_r: Adam,
    pub v_c: Adam,
    pub q_r: Adam,
    pub q_c: Adam,
}

impl Optimizers {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            policy: Adam::new(cfg.actor_lr),
            v_r: Adam::new(cfg.critic_lr),
            v_c: Adam::new(cfg.critic_lr),
            q_r: Adam::new(cfg.critic_lr),
            q_c: Adam::new(cfg.critic_lr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerRngs {
    pub env: Rng,
    pub policy: Rng,
    pub attack: Rng,
    pub minibatch: Rng,
}

impl TrainerRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            env: stream(seed, Stream::Env),
            policy: stream(seed, Stream::Policy),
            attack: stream(seed, Stream::Attack),
            minibatch: stream(seed, Stream::Minibatch),
        }
    }
}

/// Everything a training run mutates.
pub struct Trainer {
    pub method: Method,
    pub env: HevEnv,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub norm: Norm,
    pub seed: u64,
    pub agent: Agent,
    pub opt: Optimizers,
    pub lag: LagrangianState,
    /// Completed epochs.
    pub epoch: usize,
    pub rngs: TrainerRngs,
}

impl Trainer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        method: Method,
        env: HevEnv,
        network: &NetworkConfig,
        train: TrainConfig,
        attack: AttackConfig,
        norm: Norm,
        seed: u64,
    ) -> Result<Self, TrainError> {
        train.validate()?;
        attack.validate()?;
        network.validate()?;
        let mut policy_init = stream(seed, Stream::PolicyInit);
        let mut critic_init = stream(seed, Stream::CriticInit);
        let agent = Agent::new(network, train.init_log_std, train.init_action, &mut policy_init, &mut critic_init);
        Ok(Self {
            method,
            env,
            opt: Optimizers::new(&train),
            lag: LagrangianState::from_config(&train),
            train,
            attack,
            norm,
            seed,
            agent,
            epoch: 0,
            rngs: TrainerRngs::new(seed),
        })
    }

    /// Resume from a saved state. The run configuration comes from the caller.
    pub fn from_checkpoint(
        ckpt: Checkpoint,
        env: HevEnv,
        train: TrainConfig,
        attack: AttackConfig,
        norm: Norm,
    ) -> Result<Self, TrainError> {
        train.validate()?;
        attack.validate()?;
        Ok(Self {
            method: ckpt.method,
            env,
            train,
            attack,
            norm,
            seed: ckpt.seed,
            agent: ckpt.agent,
            opt: ckpt.optimizers,
            lag: ckpt.lagrangian,
            epoch: ckpt.epoch,
            rngs: ckpt.rngs,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.method,
            self.seed,
            self.epoch,
            self.agent.clone(),
            self.opt.clone(),
            self.lag,
            self.rngs.clone(),
        )
    }

    fn diverged(&self, reason: String) -> TrainError {
        TrainError::Diverged {
            epoch: self.epoch + 1,
            reason,
            checkpoint: Box::new(self.checkpoint()),
        }
    }

    /// Radius the training attacker uses at the next epoch.
    pub fn current_epsilon(&self) -> f64 {
        if self.method.training_attack() == AttackKind::None {
            0.0
        } else {
            epsilon_schedule(self.epoch + 1, &self.train)
        }
    }

    /// Run every remaining epoch, reporting each one.
    pub fn train(&mut self, mut on_epoch: impl FnMut(&EpochStats)) -> Result<Vec<EpochStats>, TrainError> {
        let mut history = Vec::with_capacity(self.train.epochs.saturating_sub(self.epoch));
        while self.epoch < self.train.epochs {
            let stats = self.run_epoch()?;
            on_epoch(&stats);
            history.push(stats);
        }
        Ok(history)
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats, TrainError> {
        let epsilon = self.current_epsilon();
        let budget = AttackBudget {
            norm: self.norm,
            epsilon,
        };
        let kind = self.method.training_attack();
        let regime = self.method.regime();
        let spec = RolloutSpec {
            steps: self.train.steps_per_epoch,
            gamma: self.train.gamma,
            gae_lambda: self.train.gae_lambda,
            soc_jitter: self.train.initial_soc_jitter,
            reward_scale: self.train.reward_scale,
            cost_scale: self.train.cost_scale,
        };

        let rollout_kind = if regime == Regime::Perturbed { kind } else { AttackKind::None };
        let adversary = self.agent.adversary(rollout_kind, budget, &self.attack, None);
        let batch = collect_rollout(
            &self.env,
            &self.agent,
            &adversary,
            &spec,
            RolloutRngs {
                env: &mut self.rngs.env,
                policy: &mut self.rngs.policy,
                attack: &mut self.rngs.attack,
            },
        )?;

        let smoothing_targets = if regime == Regime::Smoothed && self.train.kl_weight > 0.0 && epsilon > 0.0 {
            let adversary = self.agent.adversary(kind, budget, &self.attack, None);
            let mut out = Vec::with_capacity(batch.len());
            for t in &batch.transitions {
                let s = adversary.perturb(&t.s.to_array(), &mut self.rngs.attack)?;
                out.push([s[0], s[1]]);
            }
            Some(out)
        } else {
            None
        };

        let (reward, cost) = episode_means(&batch);
        if cost.is_finite() {
            self.lag = self.lag.update(cost);
        }

        let actor_loss = self.update_actor(&batch, smoothing_targets.as_deref())?;
        let (critic_loss_r, critic_loss_c) = self.update_critics(&batch)?;

        if !actor_loss.is_finite() {
            return Err(self.diverged(format!("actor loss {actor_loss}")));
        }
        let limit = self.train.critic_loss_limit;
        if !(critic_loss_r.abs() <= limit && critic_loss_c.abs() <= limit) {
            return Err(self.diverged(format!(
                "critic loss r={critic_loss_r} c={critic_loss_c} beyond {limit}"
            )));
        }
        if !self.agent.all_finite() {
            return Err(self.diverged("non-finite network parameters".into()));
        }

        self.epoch += 1;
        Ok(EpochStats {
            epoch: self.epoch,
            reward,
            cost,
            lambda: self.lag.lambda,
            epsilon,
            actor_loss,
            critic_loss_r,
            critic_loss_c,
        })
    }

    fn update_actor(&mut self, batch: &RolloutBatch, smoothing: Option<&[[f64; 2]]>) -> Result<f64, TrainError> {
        let obs = match self.method.regime() {
            Regime::Perturbed => batch.perturbed_obs(),
            Regime::Smoothed => batch.clean_obs(),
        };
        let clean = batch.clean_obs();
        let targets = smoothing.map(|s| rows(s.iter().copied()));
        let pre = ndarray::Array2::from_shape_vec((batch.len(), 1), batch.pre_squash.clone()).expect("column");
        let adv_r = standardize(&batch.adv_r);
        let n = batch.len();
        let mut order: Vec<usize> = (0..n).collect();
        let (mut total, mut count) = (0.0, 0usize);

        for _ in 0..self.train.update_iters {
            order.shuffle(&mut self.rngs.minibatch);
            for chunk in order.chunks(self.train.minibatch_size) {
                let o = obs.select(Axis(0), chunk);
                let u = pre.select(Axis(0), chunk);
                let lp: Vec<f64> = chunk.iter().map(|&i| batch.log_probs[i]).collect();
                let ar: Vec<f64> = chunk.iter().map(|&i| adv_r[i]).collect();
                let ac: Vec<f64> = chunk.iter().map(|&i| batch.adv_c[i]).collect();
                let pb = PolicyBatch {
                    obs: o.view(),
                    pre_squash: u.view(),
                    old_log_prob: &lp,
                    adv_r: &ar,
                    adv_c: &ac,
                };
                let out = ppo_lagrangian_loss(
                    &pb,
                    &self.agent.policy,
                    &self.lag,
                    self.train.clip_ratio,
                    self.train.lambda_loss_scaling,
                )?;
                let mut loss = out.loss;
                let mut grad = out.grad;
                if let Some(t) = &targets {
                    let c = clean.select(Axis(0), chunk);
                    let p = t.select(Axis(0), chunk);
                    let (kl, kl_grad) = kl_smoothing(&self.agent.policy, c.view(), p.view())?;
                    loss += self.train.kl_weight * kl;
                    grad.add_scaled(&kl_grad, self.train.kl_weight);
                }
                if !loss.is_finite() || !grad.all_finite() {
                    return Ok(f64::NAN);
                }
                clip_grad_norm(&mut grad, self.train.max_grad_norm);
                self.opt.policy.step(&mut self.agent.policy, &grad)?;
                self.agent.policy.clamp_log_std();
                total += loss;
                count += 1;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    fn update_critics(&mut self, batch: &RolloutBatch) -> Result<(f64, f64), TrainError> {
        let cfg = &self.train;
        let obs = batch.clean_obs();
        let next = batch.next_obs();
        let mb = &mut self.rngs.minibatch;
        let (passes, size, clip) = (cfg.update_iters, cfg.minibatch_size, cfg.max_grad_norm);
        let agent = &mut self.agent;
        let opt = &mut self.opt;
        fit_critic(&mut agent.v_r, &mut opt.v_r, obs.view(), &batch.ret_r, passes, size, clip, mb)?;
        fit_critic(&mut agent.v_c, &mut opt.v_c, obs.view(), &batch.ret_c, passes, size, clip, mb)?;

        let actions = batch.actions();
        let dones = batch.dones();
        let rewards: Vec<f64> = batch.rewards().iter().map(|r| r * cfg.reward_scale).collect();
        let costs: Vec<f64> = batch.costs().iter().map(|c| c * cfg.cost_scale).collect();
        let sched = QSchedule {
            gamma: cfg.gamma,
            passes,
            minibatch: size,
            polyak_tau: cfg.polyak_tau,
            max_grad_norm: clip,
        };
        let data_r = QData {
            obs: obs.view(),
            actions: &actions,
            next_obs: next.view(),
            signal: &rewards,
            dones: &dones,
        };
        let data_c = QData { signal: &costs, ..data_r };
        let loss_r = train_q_critic(&mut agent.q_r, &mut agent.q_r_target, &mut opt.q_r, &agent.policy, &data_r, &sched, mb)?;
        let loss_c = train_q_critic(&mut agent.q_c, &mut agent.q_c_target, &mut opt.q_c, &agent.policy, &data_c, &sched, mb)?;
        Ok((loss_r, loss_c))
    }
}

/// Mean reward and cost over the completed episodes (NaN if none finished).
pub fn episode_means(batch: &RolloutBatch) -> (f64, f64) {
    let n = batch.episode_rewards.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    (
        batch.episode_rewards.iter().sum::<f64>() / n as f64,
        batch.episode_costs.iter().sum::<f64>() / n as f64,
    )
}

/// A run counts as diverged when its final reward is more than three times
/// as negative as the vanilla baseline.
pub fn reward_diverged(final_reward: f64, baseline_reward: f64) -> bool {
    !final_reward.is_finite() || final_reward < 3.0 * -baseline_reward.abs()
}
