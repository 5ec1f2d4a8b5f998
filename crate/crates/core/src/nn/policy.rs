use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Mlp, NnError, Parameters};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Maps the real line onto `(0, 1)`: `(tanh(u) + 1) / 2`.
pub fn squash(u: f64) -> f64 {
    0.5 * (u.tanh() + 1.0)
}

pub fn squash_derivative(u: f64) -> f64 {
    let t = u.tanh();
    0.5 * (1.0 - t * t)
}

/// `ln(squash'(u))`, stable for large `|u|`.
pub fn ln_squash_derivative(u: f64) -> f64 {
    let a = u.abs();
    // ln(0.5 · sech²u) = ln 0.5 + 2(ln 2 − |u| − ln(1 + e^{−2|u|}))
    -std::f64::consts::LN_2 + 2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Diagonal Gaussian over pre-squash actions whose mean is an MLP of the
/// observation and whose log standard deviation is state independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    /// Squashed action in `[0, 1]`.
    pub action: Vec<f64>,
    /// The Gaussian draw before squashing.
    pub pre_squash: Vec<f64>,
    /// Log density of `action`, including the squash correction.
    pub log_prob: f64,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Self {
            mean: Mlp::orthogonal(&sizes, 0.01, rng),
            log_std: vec![init_log_std; act_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.output_dim()
    }

    /// Log standard deviations clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn effective_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn pre_squash_mean(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mean.forward(obs)
    }

    /// Deterministic action used for evaluation and inside the attackers.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.pre_squash_mean(obs)?.into_iter().map(squash).collect())
    }

    /// Log density of a pre-squash draw under the Gaussian (no squash term).
    pub fn gaussian_log_prob(&self, mean: &[f64], pre_squash: &[f64]) -> f64 {
        self.effective_log_std()
            .iter()
            .zip(mean.iter().zip(pre_squash))
            .map(|(&ls, (&m, &u))| {
                let z = (u - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum()
    }

    /// Log density of the squashed action corresponding to `pre_squash`.
    pub fn log_prob(&self, obs: &[f64], pre_squash: &[f64]) -> Result<f64, NnError> {
        let mean = self.pre_squash_mean(obs)?;
        let correction: f64 = pre_squash.iter().map(|&u| ln_squash_derivative(u)).sum();
        Ok(self.gaussian_log_prob(&mean, pre_squash) - correction)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<ActionSample, NnError> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("observation"));
        }
        let mean = self.pre_squash_mean(obs)?;
        let pre_squash: Vec<f64> = mean
            .iter()
            .zip(self.effective_log_std())
            .map(|(&m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let correction: f64 = pre_squash.iter().map(|&u| ln_squash_derivative(u)).sum();
        let log_prob = self.gaussian_log_prob(&mean, &pre_squash) - correction;
        Ok(ActionSample {
            action: pre_squash.iter().map(|&u| squash(u)).collect(),
            pre_squash,
            log_prob,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mean: self.mean.zeros_like(),
            log_std: vec![0.0; self.log_std.len()],
        }
    }
}

impl Parameters for GaussianPolicy {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices = self.mean.param_slices();
        slices.push(&self.log_std);
        slices
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices = self.mean.param_slices_mut();
        slices.push(&mut self.log_std);
        slices
    }
}

/// `KL(N(mu_a, e^{ls_a}) ‖ N(mu_b, e^{ls_b}))` summed over dimensions.
pub fn gaussian_kl(mu_a: &[f64], ls_a: &[f64], mu_b: &[f64], ls_b: &[f64]) -> f64 {
    mu_a.iter()
        .zip(ls_a)
        .zip(mu_b.iter().zip(ls_b))
        .map(|((&ma, &la), (&mb, &lb))| {
            let var_ratio = (2.0 * (la - lb)).exp();
            let d = (ma - mb) / lb.exp();
            0.5 * (var_ratio + d * d - 1.0) + (lb - la)
        })
        .sum()
}

/// KL between the pre-squash action distributions of two policies at `obs`.
pub fn kl_divergence(a: &GaussianPolicy, b: &GaussianPolicy, obs: &[f64]) -> Result<f64, NnError> {
    if a.act_dim() != b.act_dim() {
        return Err(NnError::Dim {
            expected: a.act_dim(),
            got: b.act_dim(),
        });
    }
    let mu_a = a.pre_squash_mean(obs)?;
    let mu_b = b.pre_squash_mean(obs)?;
    Ok(gaussian_kl(&mu_a, &a.effective_log_std(), &mu_b, &b.effective_log_std()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_policy(mean: f64, log_std: f64) -> GaussianPolicy {
        let mut net = Mlp::zeros(&[2, 1]);
        net.layers_mut()[0].bias[0] = mean;
        GaussianPolicy {
            mean: net,
            log_std: vec![log_std],
        }
    }

    #[test]
    fn near_deterministic_sample_is_squashed_mean() {
        let p = constant_policy(0.4, -20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = p.sample_action(&[0.5, 0.5], &mut rng).unwrap();
        assert!((s.action[0] - squash(0.4)).abs() < 1e-8);
        assert!(s.log_prob.is_finite());
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let p = constant_policy(-0.3, -0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = p.sample_action(&[0.1, 0.2], &mut rng).unwrap();
            let u = s.pre_squash[0];
            let sigma = (-0.5f64).exp();
            let gauss = (-0.5 * ((u + 0.3) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let density = gauss / squash_derivative(u);
            assert!((s.log_prob - density.ln()).abs() < 1e-9);
            assert!((p.log_prob(&[0.1, 0.2], &s.pre_squash).unwrap() - s.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_examples() {
        let a = constant_policy(0.0, 0.0);
        let b = constant_policy(1.0, 0.0);
        let obs = [0.3, 0.3];
        assert_eq!(kl_divergence(&a, &a, &obs).unwrap(), 0.0);
        assert!((kl_divergence(&a, &b, &obs).unwrap() - 0.5).abs() < 1e-15);

        let c = constant_policy(0.0, 0.7);
        let ab = kl_divergence(&a, &c, &obs).unwrap();
        let ba = kl_divergence(&c, &a, &obs).unwrap();
        assert!((ab - ba).abs() > 1e-3);
    }

    #[test]
    fn log_std_is_clamped_on_use() {
        let p = constant_policy(0.0, 50.0);
        assert_eq!(p.effective_log_std(), vec![LOG_STD_MAX]);
    }

    #[test]
    fn squash_stays_in_unit_interval() {
        assert_eq!(squash(-40.0), 0.0);
        assert_eq!(squash(40.0), 1.0);
        assert_eq!(squash(0.0), 0.5);
        assert!(ln_squash_derivative(400.0).is_finite());
    }
}
