use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticFlavor {
    RewardV,
    CostV,
    RewardQ,
    CostQ,
}

impl CriticFlavor {
    /// Q-flavored critics take `[obs, action]` as input.
    pub fn takes_action(self) -> bool {
        matches!(self, CriticFlavor::RewardQ | CriticFlavor::CostQ)
    }
}

/// Scalar value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp,
    pub flavor: CriticFlavor,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(flavor: CriticFlavor, obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let input = if flavor.takes_action() { obs_dim + act_dim } else { obs_dim };
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            net: Mlp::orthogonal(&sizes, 1.0, rng),
            flavor,
        }
    }

    pub fn input(&self, obs: &[f64], action: Option<&[f64]>) -> Result<Vec<f64>, NnError> {
        match (self.flavor.takes_action(), action) {
            (true, Some(a)) => Ok(obs.iter().chain(a).copied().collect()),
            (false, None) => Ok(obs.to_vec()),
            (true, None) => Err(NnError::Shape("Q critic needs an action".into())),
            (false, Some(_)) => Err(NnError::Shape("V critic takes no action".into())),
        }
    }

    pub fn value(&self, obs: &[f64], action: Option<&[f64]>) -> Result<f64, NnError> {
        Ok(self.net.forward(&self.input(obs, action)?)?[0])
    }

    /// Values for a batch of pre-assembled input rows.
    pub fn values(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        Ok(self.net.forward_batch(inputs)?.into_raw_vec_and_offset().0)
    }

    /// Gradient of `Q(obs, action)` with respect to the action part.
    pub fn action_gradient(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        let x = self.input(obs, Some(action))?;
        let view = ArrayView2::from_shape((1, x.len()), &x).expect("row view");
        let trace = self.net.forward_trace(view)?;
        let value = trace.output()[[0, 0]];
        let (_, g) = self.net.backward(&trace, Array2::ones((1, 1)).view());
        Ok((value, g.row(0).iter().skip(obs.len()).copied().collect()))
    }
}
