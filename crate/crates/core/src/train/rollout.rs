use ndarray::Array2;
use rand::Rng;

use crate::attacks::Adversary;
use crate::nn::Critic;
use crate::powertrain::{HevEnv, TransitionTuple};

use super::{Agent, TrainError};

/// Transitions gathered under `π ∘ ν`, with what the policy actually saw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<TransitionTuple>,
    /// Observation fed to the policy at each step (`s̃ = ν(s)`).
    pub perturbed: Vec<[f64; 2]>,
    pub pre_squash: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub adv_r: Vec<f64>,
    pub adv_c: Vec<f64>,
    pub ret_r: Vec<f64>,
    pub ret_c: Vec<f64>,
    /// Undiscounted sums of every episode completed within the batch.
    pub episode_rewards: Vec<f64>,
    pub episode_costs: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clean_obs(&self) -> Array2<f64> {
        rows(self.transitions.iter().map(|t| t.s.to_array()))
    }

    pub fn next_obs(&self) -> Array2<f64> {
        rows(self.transitions.iter().map(|t| t.s_next.to_array()))
    }

    pub fn perturbed_obs(&self) -> Array2<f64> {
        rows(self.perturbed.iter().copied())
    }

    pub fn actions(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.a).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.r).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.c).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.done).collect()
    }
}

pub(crate) fn rows(it: impl Iterator<Item = [f64; 2]>) -> Array2<f64> {
    let flat: Vec<f64> = it.flatten().collect();
    Array2::from_shape_vec((flat.len() / 2, 2), flat).expect("two columns")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSpec {
    pub steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub soc_jitter: f64,
    pub reward_scale: f64,
    pub cost_scale: f64,
}

/// Random streams a rollout draws from.
pub struct RolloutRngs<'a, R: Rng + ?Sized> {
    pub env: &'a mut R,
    pub policy: &'a mut R,
    pub attack: &'a mut R,
}

/// Initial SOC `B + U(−j, j)`.
pub fn initial_soc<R: Rng + ?Sized>(env: &HevEnv, jitter: f64, rng: &mut R) -> f64 {
    let b = env.envelope.b;
    if jitter > 0.0 {
        (b + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0)
    } else {
        b
    }
}

/// Run `spec.steps` environment steps with actions sampled from
/// `π(·|ν(s))`, then attach returns and GAE advantages. Episodes that end
/// inside the batch bootstrap with zero; the trailing partial episode
/// bootstraps with the critic value of its last state.
pub fn collect_rollout<R: Rng + ?Sized>(
    env: &HevEnv,
    agent: &Agent,
    adversary: &Adversary,
    spec: &RolloutSpec,
    rngs: RolloutRngs<'_, R>,
) -> Result<RolloutBatch, TrainError> {
    let mut batch = RolloutBatch {
        transitions: Vec::with_capacity(spec.steps),
        perturbed: Vec::with_capacity(spec.steps),
        pre_squash: Vec::with_capacity(spec.steps),
        log_probs: Vec::with_capacity(spec.steps),
        ..Default::default()
    };
    let mut state = env.reset(Some(initial_soc(env, spec.soc_jitter, rngs.env)))?;
    let (mut ep_r, mut ep_c) = (0.0, 0.0);
    for _ in 0..spec.steps {
        let obs = crate::powertrain::Observation::of(&state).to_array();
        let seen = adversary.perturb(&obs, rngs.attack)?;
        let sample = agent.policy.sample_action(&seen, rngs.policy)?;
        let (next, tr) = env.step(&state, sample.action[0])?;
        ep_r += tr.r;
        ep_c += tr.c;
        batch.transitions.push(tr);
        batch.perturbed.push([seen[0], seen[1]]);
        batch.pre_squash.push(sample.pre_squash[0]);
        batch.log_probs.push(sample.log_prob);
        state = if tr.done {
            batch.episode_rewards.push(ep_r);
            batch.episode_costs.push(ep_c);
            ep_r = 0.0;
            ep_c = 0.0;
            env.reset(Some(initial_soc(env, spec.soc_jitter, rngs.env)))?
        } else {
            next
        };
    }
    attach_advantages(&mut batch, &agent.v_r, &agent.v_c, spec)?;
    Ok(batch)
}

/// Fill advantages and returns from the scaled batch signals and the V
/// critics.
pub fn attach_advantages(batch: &mut RolloutBatch, v_r: &Critic, v_c: &Critic, spec: &RolloutSpec) -> Result<(), TrainError> {
    let (gamma, lam) = (spec.gamma, spec.gae_lambda);
    let obs = batch.clean_obs();
    let dones = batch.dones();
    let last_open = !dones.last().copied().unwrap_or(true);
    let last_obs = batch.transitions.last().map(|t| t.s_next.to_array());
    let bootstrap = |critic: &Critic| -> Result<f64, TrainError> {
        match (last_open, last_obs) {
            (true, Some(o)) => Ok(critic.value(&o, None)?),
            _ => Ok(0.0),
        }
    };
    let vr = v_r.values(obs.view())?;
    let vc = v_c.values(obs.view())?;
    let rewards: Vec<f64> = batch.rewards().iter().map(|r| r * spec.reward_scale).collect();
    let costs: Vec<f64> = batch.costs().iter().map(|c| c * spec.cost_scale).collect();
    let (last_r, last_c) = (bootstrap(v_r)?, bootstrap(v_c)?);
    batch.adv_r = gae(&rewards, &vr, &dones, last_r, gamma, lam);
    batch.adv_c = gae(&costs, &vc, &dones, last_c, gamma, lam);
    batch.ret_r = discounted_returns(&rewards, &dones, last_r, gamma);
    batch.ret_c = discounted_returns(&costs, &dones, last_c, gamma);
    Ok(())
}

/// Generalized advantage estimates over contiguous episodes.
pub fn gae(signal: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = signal.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (last_value, 0.0)
        } else {
            (values[t + 1], running)
        };
        let delta = signal[t] + gamma * next_value - values[t];
        running = delta + gamma * lam * carry;
        adv[t] = running;
    }
    adv
}

/// Discounted reward-to-go, restarting at each episode end.
pub fn discounted_returns(signal: &[f64], dones: &[bool], last_value: f64, gamma: f64) -> Vec<f64> {
    let n = signal.len();
    let mut out = vec![0.0; n];
    let mut running = last_value;
    for t in (0..n).rev() {
        if dones[t] {
            running = 0.0;
        }
        running = signal[t] + gamma * running;
        out[t] = running;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_return() {
        let r = discounted_returns(&[1.0, 1.0, 1.0], &[false, false, true], 0.0, 0.9);
        assert!((r[0] - 2.71).abs() < 1e-12);
        assert!((r[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gae_limits() {
        let sig = [0.5, -1.0, 2.0, 0.3, 1.1];
        let vals = [0.2, 0.1, -0.4, 0.7, 0.05];
        let dones = [false, true, false, false, false];
        let last = 0.9;
        let g = 0.95;

        let one = gae(&sig, &vals, &dones, last, g, 1.0);
        let mc = discounted_returns(&sig, &dones, last, g);
        for t in 0..5 {
            assert!((one[t] - (mc[t] - vals[t])).abs() < 1e-12);
        }

        let zero = gae(&sig, &vals, &dones, last, g, 0.0);
        let next = [vals[1], 0.0, vals[3], vals[4], last];
        for t in 0..5 {
            assert!((zero[t] - (sig[t] + g * next[t] - vals[t])).abs() < 1e-12);
        }
    }
}
