use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{clip_grad_norm, squash, Adam, Critic, GaussianPolicy};

use super::TrainError;

/// Minibatch regression of a critic onto fixed targets. Returns the mean
/// squared error averaged over the last pass.
#[allow(clippy::too_many_arguments)]
pub fn fit_critic<R: Rng + ?Sized>(
    critic: &mut Critic,
    opt: &mut Adam,
    inputs: ArrayView2<f64>,
    targets: &[f64],
    passes: usize,
    minibatch: usize,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<f64, TrainError> {
    let n = inputs.nrows();
    if n == 0 || targets.len() != n {
        return Err(TrainError::Config(format!("{n} critic inputs for {} targets", targets.len())));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_pass = 0.0;
    for _ in 0..passes {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(minibatch) {
            let x = inputs.select(Axis(0), chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            total += regression_step(critic, opt, x.view(), &y, max_grad_norm)? * chunk.len() as f64;
        }
        last_pass = total / n as f64;
    }
    Ok(last_pass)
}

/// One Adam step on the mean squared error; returns the loss before the step.
pub fn regression_step(
    critic: &mut Critic,
    opt: &mut Adam,
    x: ArrayView2<f64>,
    y: &[f64],
    max_grad_norm: f64,
) -> Result<f64, TrainError> {
    let m = y.len() as f64;
    let (loss, mut grad) = critic.net.grad_wrt_params(x, |out| {
        let mut d = Array2::zeros(out.dim());
        let mut loss = 0.0;
        for (i, &target) in y.iter().enumerate() {
            let e = out[[i, 0]] - target;
            loss += e * e / m;
            d[[i, 0]] = 2.0 * e / m;
        }
        (loss, d)
    })?;
    clip_grad_norm(&mut grad, max_grad_norm);
    opt.step(&mut critic.net, &grad)?;
    Ok(loss)
}

/// Rows `[s, a]` for a Q critic.
pub fn q_inputs(obs: ArrayView2<f64>, actions: &[f64]) -> Array2<f64> {
    let a = ArrayView2::from_shape((actions.len(), 1), actions).expect("action column");
    concatenate(Axis(1), &[obs, a]).expect("same row count")
}

/// TD(0) targets `f + γ·(1 − done)·Q_target(s′, μ(s′))`.
pub fn td_targets(
    q_target: &Critic,
    policy: &GaussianPolicy,
    next_obs: ArrayView2<f64>,
    signal: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<f64>, TrainError> {
    let next_actions: Vec<f64> = policy
        .mean
        .forward_batch(next_obs)?
        .column(0)
        .iter()
        .map(|&u| squash(u))
        .collect();
    let q_next = q_target.values(q_inputs(next_obs, &next_actions).view())?;
    Ok(signal
        .iter()
        .zip(dones)
        .zip(q_next)
        .map(|((&f, &done), q)| if done { f } else { f + gamma * q })
        .collect())
}

/// Fixed transition data for Q-critic training.
#[derive(Debug, Clone, Copy)]
pub struct QData<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: &'a [f64],
    pub next_obs: ArrayView2<'a, f64>,
    pub signal: &'a [f64],
    pub dones: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSchedule {
    pub gamma: f64,
    pub passes: usize,
    pub minibatch: usize,
    pub polyak_tau: f64,
    pub max_grad_norm: f64,
}

/// TD(0) regression of `q` toward its Polyak target. Targets are refreshed
/// at the start of every pass and the target network follows after every
/// step. Returns the mean squared TD error of the last pass.
pub fn train_q_critic<R: Rng + ?Sized>(
    q: &mut Critic,
    target: &mut Critic,
    opt: &mut Adam,
    policy: &GaussianPolicy,
    data: &QData,
    sched: &QSchedule,
    rng: &mut R,
) -> Result<f64, TrainError> {
    let n = data.obs.nrows();
    if n == 0 {
        return Err(TrainError::Config("Q-critic batch is empty".into()));
    }
    let inputs = q_inputs(data.obs, data.actions);
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_pass = 0.0;
    for _ in 0..sched.passes {
        let y = td_targets(target, policy, data.next_obs, data.signal, data.dones, sched.gamma)?;
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(sched.minibatch) {
            let x = inputs.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            total += regression_step(q, opt, x.view(), &yb, sched.max_grad_norm)? * chunk.len() as f64;
            target.net.polyak_update(&q.net, sched.polyak_tau)?;
        }
        last_pass = total / n as f64;
    }
    Ok(last_pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{CriticFlavor, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_signal_keeps_zero_critic() {
        let mut q = Critic {
            net: Mlp::zeros(&[3, 4, 1]),
            flavor: CriticFlavor::CostQ,
        };
        let mut target = q.clone();
        let policy = GaussianPolicy {
            mean: Mlp::zeros(&[2, 1]),
            log_std: vec![0.0],
        };
        let obs = ndarray::array![[0.5, 0.1], [0.6, 0.2]];
        let data = QData {
            obs: obs.view(),
            actions: &[0.3, 0.7],
            next_obs: obs.view(),
            signal: &[0.0, 0.0],
            dones: &[false, true],
        };
        let sched = QSchedule {
            gamma: 0.9,
            passes: 5,
            minibatch: 2,
            polyak_tau: 0.5,
            max_grad_norm: 1.0,
        };
        let mut opt = Adam::new(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = train_q_critic(&mut q, &mut target, &mut opt, &policy, &data, &sched, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(q.value(&[0.5, 0.1], Some(&[0.3])).unwrap(), 0.0);
    }
}
