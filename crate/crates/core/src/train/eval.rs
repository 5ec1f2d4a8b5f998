use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{amad_threshold, Adversary, AttackBudget, AttackConfig, AttackKind};
use crate::powertrain::{HevEnv, Observation};
use crate::rng::{substream, Stream};

use super::rollout::initial_soc;
use super::{Agent, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Episodes per checkpoint and condition.
    pub episodes: usize,
    pub initial_soc_jitter: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            initial_soc_jitter: 0.005,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.episodes == 0 {
            return Err(TrainError::Config("eval episodes must be ≥ 1".into()));
        }
        if !(self.initial_soc_jitter >= 0.0 && self.initial_soc_jitter < 0.5) {
            return Err(TrainError::Config("eval initial_soc_jitter must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub cost: f64,
    pub fuel_g: f64,
}

/// One deterministic-policy episode under an attacker. Returns the outcome
/// and the true states visited before each step.
pub fn run_episode<R: Rng + ?Sized>(
    env: &HevEnv,
    agent: &Agent,
    adversary: &Adversary,
    soc0: f64,
    rng: &mut R,
) -> Result<(EpisodeOutcome, Vec<Vec<f64>>), TrainError> {
    let mut state = env.reset(Some(soc0))?;
    let mut visited = Vec::with_capacity(env.horizon());
    let (mut reward, mut cost) = (0.0, 0.0);
    loop {
        let obs = Observation::of(&state).to_array().to_vec();
        let seen = adversary.perturb(&obs, rng)?;
        let action = agent.policy.mean_action(&seen)?[0];
        visited.push(obs);
        let (next, tr) = env.step(&state, action)?;
        reward += tr.r;
        cost += tr.c;
        state = next;
        if tr.done {
            break;
        }
    }
    Ok((
        EpisodeOutcome {
            reward,
            cost,
            fuel_g: state.fuel_g_cum,
        },
        visited,
    ))
}

/// Per-episode results for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: AttackKind,
    pub episodes: Vec<EpisodeOutcome>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: AttackKind,
    pub episodes: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
}

impl ConditionResult {
    pub fn summary(&self) -> ConditionSummary {
        summarize(self.condition, &self.episodes)
    }

    pub fn mean_cost(&self) -> f64 {
        self.summary().cost_mean
    }

    pub fn mean_reward(&self) -> f64 {
        self.summary().reward_mean
    }
}

pub fn summarize(condition: AttackKind, episodes: &[EpisodeOutcome]) -> ConditionSummary {
    let r: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let c: Vec<f64> = episodes.iter().map(|e| e.cost).collect();
    let (reward_mean, reward_std) = mean_std(&r);
    let (cost_mean, cost_std) = mean_std(&c);
    ConditionSummary {
        condition,
        episodes: episodes.len(),
        reward_mean,
        reward_std,
        cost_mean,
        cost_std,
    }
}

/// Evaluate the deterministic policy for `cfg.episodes` episodes under one
/// condition. Episode `i` starts from the same SOC under every condition;
/// AMAD takes its threshold from the unattacked episode with that start.
pub fn evaluate(
    env: &HevEnv,
    agent: &Agent,
    condition: AttackKind,
    budget: AttackBudget,
    attack: &AttackConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<ConditionResult, TrainError> {
    budget.validate()?;
    cfg.validate()?;
    let natural = agent.adversary(AttackKind::None, budget, attack, None);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for i in 0..cfg.episodes as u64 {
        let soc0 = initial_soc(env, cfg.initial_soc_jitter, &mut substream(seed, Stream::Eval, i));
        let mut rng = substream(seed, Stream::Attack, i);
        let threshold = if condition == AttackKind::Amad {
            let (_, states) = run_episode(env, agent, &natural, soc0, &mut rng)?;
            Some(amad_threshold(&states, &agent.policy, &agent.q_c, attack)?)
        } else {
            None
        };
        let adversary = agent.adversary(condition, budget, attack, threshold);
        episodes.push(run_episode(env, agent, &adversary, soc0, &mut rng)?.0);
    }
    Ok(ConditionResult { condition, episodes })
}

/// Evaluate several conditions.
pub fn evaluate_all(
    env: &HevEnv,
    agent: &Agent,
    conditions: &[AttackKind],
    budget: AttackBudget,
    attack: &AttackConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<ConditionResult>, TrainError> {
    conditions
        .iter()
        .map(|&c| evaluate(env, agent, c, budget, attack, cfg, seed))
        .collect()
}
