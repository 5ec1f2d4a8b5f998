use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{Adversary, AttackBudget, AttackConfig, AttackKind};
use crate::nn::{Critic, CriticFlavor, GaussianPolicy, Mlp};
use crate::powertrain::Observation;

use super::TrainError;

pub const OBS_DIM: usize = Observation::DIM;
pub const ACT_DIM: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Hidden layer widths shared by the policy and all critics.
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: vec![256, 256] }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(TrainError::Config(format!(
                "hidden layers {:?} must be non-empty with positive widths",
                self.hidden
            )));
        }
        Ok(())
    }
}

/// Policy, state-value critics for advantages, action-value critics for the
/// attackers, and the Polyak targets of the latter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub v_r: Critic,
    pub v_c: Critic,
    pub q_r: Critic,
    pub q_c: Critic,
    pub q_r_target: Critic,
    pub q_c_target: Critic,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        network: &NetworkConfig,
        init_log_std: f64,
        init_action: f64,
        policy_rng: &mut R,
        critic_rng: &mut R,
    ) -> Self {
        let hidden = &network.hidden;
        let mut policy = GaussianPolicy::new(OBS_DIM, ACT_DIM, hidden, init_log_std, policy_rng);
        // squash(u) = a  ⇔  u = atanh(2a − 1)
        let bias = (2.0 * init_action - 1.0).atanh();
        if let Some(out) = policy.mean.layers_mut().last_mut() {
            out.bias.fill(bias);
        }
        let v_r = Critic::new(CriticFlavor::RewardV, OBS_DIM, ACT_DIM, hidden, critic_rng);
        let v_c = Critic::new(CriticFlavor::CostV, OBS_DIM, ACT_DIM, hidden, critic_rng);
        let q_r = Critic::new(CriticFlavor::RewardQ, OBS_DIM, ACT_DIM, hidden, critic_rng);
        let q_c = Critic::new(CriticFlavor::CostQ, OBS_DIM, ACT_DIM, hidden, critic_rng);
        Self {
            q_r_target: q_r.clone(),
            q_c_target: q_c.clone(),
            policy,
            v_r,
            v_c,
            q_r,
            q_c,
        }
    }

    pub fn hidden(&self) -> Vec<usize> {
        let sizes = self.policy.mean.sizes();
        sizes[1..sizes.len() - 1].to_vec()
    }

    /// An attacker aimed at this agent's own policy and critics.
    pub fn adversary<'a>(
        &'a self,
        kind: AttackKind,
        budget: AttackBudget,
        cfg: &'a AttackConfig,
        amad_threshold: Option<f64>,
    ) -> Adversary<'a> {
        Adversary {
            kind,
            budget,
            cfg,
            policy: &self.policy,
            q_r: &self.q_r,
            q_c: &self.q_c,
            amad_threshold,
        }
    }

    pub fn all_finite(&self) -> bool {
        use crate::nn::Parameters;
        let nets: [&Mlp; 6] = [
            &self.v_r.net,
            &self.v_c.net,
            &self.q_r.net,
            &self.q_c.net,
            &self.q_r_target.net,
            &self.q_c_target.net,
        ];
        self.policy.all_finite() && nets.iter().all(|n| n.all_finite())
    }
}
