use ndarray::{Array2, ArrayView2};

use crate::nn::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

use super::{LagrangianState, TrainError};

/// One minibatch as the actor sees it.
#[derive(Debug, Clone, Copy)]
pub struct PolicyBatch<'a> {
    /// Observations the actions were conditioned on.
    pub obs: ArrayView2<'a, f64>,
    /// Pre-squash action draws, `n × act_dim`.
    pub pre_squash: ArrayView2<'a, f64>,
    pub old_log_prob: &'a [f64],
    /// Reward advantages, already standardized.
    pub adv_r: &'a [f64],
    pub adv_c: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient of `loss` laid out like the policy.
    pub grad: GaussianPolicy,
    pub clip_fraction: f64,
    /// Sample estimate of `KL(old ‖ new)`.
    pub approx_kl: f64,
}

/// `min(ρA, clip(ρ, 1−c, 1+c)·A)` and its derivative in `ρ`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// `max(ρA, clip(ρ, 1−c, 1+c)·A)`: the pessimistic bound for a quantity
/// being minimized.
pub fn pessimistic_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped >= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Standardize to zero mean and unit variance (left centered if flat).
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / if std > 1e-8 { std } else { 1.0 }).collect()
}

fn check_lengths(batch: &PolicyBatch) -> Result<usize, TrainError> {
    let n = batch.obs.nrows();
    let ok = batch.pre_squash.nrows() == n
        && batch.old_log_prob.len() == n
        && batch.adv_r.len() == n
        && batch.adv_c.len() == n;
    if !ok || n == 0 {
        return Err(TrainError::Config(format!("inconsistent or empty policy batch of {n} rows")));
    }
    Ok(n)
}

/// Clipped PPO-Lagrangian loss
/// `[−mean(min-surrogate on A_r) + λ·mean(max-surrogate on A_c)] / (1 + λ)`
/// with its exact gradient.
pub fn ppo_lagrangian_loss(
    batch: &PolicyBatch,
    policy: &GaussianPolicy,
    lag: &LagrangianState,
    clip: f64,
    scale_by_lambda: bool,
) -> Result<LossOutput, TrainError> {
    let n = check_lengths(batch)?;
    let lambda = lag.lambda;
    let scale = if scale_by_lambda { 1.0 / (1.0 + lambda) } else { 1.0 };
    let trace = policy.mean.forward_trace(batch.obs)?;
    let mean = trace.output();
    let act_dim = mean.ncols();
    let log_std = policy.effective_log_std();
    let correction: Vec<f64> = batch
        .pre_squash
        .rows()
        .into_iter()
        .map(|u| u.iter().map(|&x| crate::nn::ln_squash_derivative(x)).sum())
        .collect();

    let mut d_mean = Array2::zeros((n, act_dim));
    let mut d_log_std = vec![0.0; act_dim];
    let (mut loss, mut clipped, mut approx_kl) = (0.0, 0usize, 0.0);
    for i in 0..n {
        let mu = mean.row(i);
        let u = batch.pre_squash.row(i);
        let logp = policy.gaussian_log_prob(mu.as_slice().expect("row"), &u.to_vec()) - correction[i];
        let log_ratio = logp - batch.old_log_prob[i];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(TrainError::NonFinite("probability ratio"));
        }
        approx_kl -= log_ratio;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        let (lr, dlr) = clipped_surrogate(ratio, batch.adv_r[i], clip);
        let (lc, dlc) = pessimistic_surrogate(ratio, batch.adv_c[i], clip);
        loss += scale * (-lr + lambda * lc);
        // ∂loss_i/∂log π = ∂loss_i/∂ρ · ρ
        let g = scale * (-dlr + lambda * dlc) * ratio / n as f64;
        if g != 0.0 {
            for d in 0..act_dim {
                let sigma2 = (2.0 * log_std[d]).exp();
                let diff = u[d] - mu[d];
                d_mean[[i, d]] += g * diff / sigma2;
                d_log_std[d] += g * (diff * diff / sigma2 - 1.0);
            }
        }
    }
    let (mean_grad, _) = policy.mean.backward(&trace, d_mean.view());
    Ok(LossOutput {
        loss: loss / n as f64,
        grad: GaussianPolicy {
            mean: mean_grad,
            log_std: masked_log_std_grad(policy, d_log_std),
        },
        clip_fraction: clipped as f64 / n as f64,
        approx_kl: approx_kl / n as f64,
    })
}

/// The clamp on `log_std` has zero slope outside its range.
fn masked_log_std_grad(policy: &GaussianPolicy, grad: Vec<f64>) -> Vec<f64> {
    grad.into_iter()
        .zip(&policy.log_std)
        .map(|(g, &ls)| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls) { g } else { 0.0 })
        .collect()
}

/// Smoothness regularizer `mean_i KL(π(·|s_i) ‖ π_θ(·|s̃_i))`. The first
/// argument is treated as a constant; only `π_θ(·|s̃)` carries gradient.
pub fn kl_smoothing(
    policy: &GaussianPolicy,
    clean: ArrayView2<f64>,
    perturbed: ArrayView2<f64>,
) -> Result<(f64, GaussianPolicy), TrainError> {
    let n = clean.nrows();
    if n == 0 || perturbed.nrows() != n {
        return Err(TrainError::Config("KL regularizer needs matching non-empty batches".into()));
    }
    let target = policy.mean.forward_batch(clean)?;
    let trace = policy.mean.forward_trace(perturbed)?;
    let mean = trace.output();
    let log_std = policy.effective_log_std();
    let act_dim = mean.ncols();
    let mut d_mean = Array2::zeros((n, act_dim));
    let mut d_log_std = vec![0.0; act_dim];
    let mut value = 0.0;
    for i in 0..n {
        for d in 0..act_dim {
            let sigma2 = (2.0 * log_std[d]).exp();
            let diff = mean[[i, d]] - target[[i, d]];
            // Equal variances on both sides at the current parameters.
            value += 0.5 * diff * diff / sigma2;
            d_mean[[i, d]] = diff / sigma2 / n as f64;
            d_log_std[d] -= diff * diff / sigma2 / n as f64;
        }
    }
    let (mean_grad, _) = policy.mean.backward(&trace, d_mean.view());
    Ok((
        value / n as f64,
        GaussianPolicy {
            mean: mean_grad,
            log_std: masked_log_std_grad(policy, d_log_std),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_saturation() {
        let (v, d) = clipped_surrogate(1.5, 2.0, 0.2);
        assert!((v - 2.4).abs() < 1e-15);
        assert_eq!(d, 0.0);
        let (v, d) = clipped_surrogate(0.5, -1.0, 0.2);
        assert!((v + 0.8).abs() < 1e-15);
        assert_eq!(d, 0.0);
        assert_eq!(clipped_surrogate(1.0, 3.0, 0.2), (3.0, 3.0));
        // Clip only binds in the direction that would over-reward the update.
        assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), (0.5, 1.0));
    }

    #[test]
    fn pessimistic_mirror() {
        assert_eq!(pessimistic_surrogate(1.5, -2.0, 0.2).1, 0.0);
        assert_eq!(pessimistic_surrogate(0.5, -2.0, 0.2), (-1.0, -2.0));
        let (v, d) = pessimistic_surrogate(1.5, 2.0, 0.2);
        assert_eq!((v, d), (3.0, 2.0));
        let (v, d) = pessimistic_surrogate(0.5, 2.0, 0.2);
        assert!((v - 1.6).abs() < 1e-15);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn standardize_moments() {
        let z = standardize(&[1.0, 2.0, 3.0, 6.0]);
        let m: f64 = z.iter().sum::<f64>() / 4.0;
        let v: f64 = z.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        assert_eq!(standardize(&[2.0, 2.0]), vec![0.0, 0.0]);
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::nn::Parameters;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn numeric<F: Fn(&GaussianPolicy) -> f64>(policy: &GaussianPolicy, f: F) -> Vec<f64> {
        let base = policy.flat();
        let mut p = policy.clone();
        (0..base.len())
            .map(|k| {
                let h = 1e-6;
                let mut x = base.clone();
                x[k] += h;
                p.set_flat(&x).unwrap();
                let up = f(&p);
                x[k] -= 2.0 * h;
                p.set_flat(&x).unwrap();
                (up - f(&p)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn ppo_and_kl_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = GaussianPolicy::new(2, 1, &[5], -0.3, &mut rng);
        let mut policy = policy;
        for v in policy.mean.layers_mut().last_mut().unwrap().weight.iter_mut() {
            *v *= 50.0;
        }
        let n = 12;
        let obs = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let pre = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.5..1.5));
        let old: Vec<f64> = (0..n)
            .map(|i| policy.log_prob(&obs.row(i).to_vec(), &pre.row(i).to_vec()).unwrap() + rng.random_range(-0.1..0.1))
            .collect();
        let adv_r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let adv_c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = PolicyBatch {
            obs: obs.view(),
            pre_squash: pre.view(),
            old_log_prob: &old,
            adv_r: &adv_r,
            adv_c: &adv_c,
        };
        let lag = LagrangianState {
            lambda: 0.7,
            lambda_lr: 0.1,
            kappa: 1.0,
        };
        let out = ppo_lagrangian_loss(&batch, &policy, &lag, 0.05, true).unwrap();
        let fd = numeric(&policy, |p| ppo_lagrangian_loss(&batch, p, &lag, 0.05, true).unwrap().loss);
        for (a, b) in out.grad.flat().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }

        let shifted = obs.mapv(|v| v + 0.1);
        let (_, g) = kl_smoothing(&policy, obs.view(), shifted.view()).unwrap();
        // Numeric derivative with the clean-side distribution frozen.
        let frozen = policy.clone();
        let fd = numeric(&policy, |p| {
            let mut total = 0.0;
            for i in 0..n {
                let a = frozen.pre_squash_mean(&obs.row(i).to_vec()).unwrap();
                let b = p.pre_squash_mean(&shifted.row(i).to_vec()).unwrap();
                total += crate::nn::gaussian_kl(&a, &frozen.effective_log_std(), &b, &p.effective_log_std());
            }
            total / n as f64
        });
        for (a, b) in g.flat().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
