//! Observation attackers constrained to an ℓp ball around the true state.
//!
//! - uniform: independent noise inside the ball;
//! - MC / MR: projected gradient ascent on `Q_c` / `Q_r` evaluated at the
//!   true state with the action the policy takes on the perturbed state;
//! - MAD: Langevin (SGLD) ascent on the KL shift of the policy;
//! - AMAD: MAD applied only to states whose cost value exceeds a batch
//!   percentile.
//!
//! Outputs are deliberately not clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{gaussian_kl, squash, squash_derivative, Critic, CriticFlavor, GaussianPolicy, NnError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("attack batch is empty")]
    EmptyBatch,
    #[error("{attack} needs a {expected:?} critic, got {got:?}")]
    WrongCritic {
        attack: &'static str,
        expected: &'static [CriticFlavor],
        got: CriticFlavor,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Linf,
}

impl Norm {
    pub fn of(self, v: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Norm::L2 => v.into_iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.into_iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.of(a.iter().zip(b).map(|(x, y)| x - y))
    }
}

/// The admissible perturbation set `B_p^ε(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackBudget {
    pub norm: Norm,
    pub epsilon: f64,
}

impl AttackBudget {
    pub fn linf(epsilon: f64) -> Self {
        Self {
            norm: Norm::Linf,
            epsilon,
        }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(AttackError::Config(format!("epsilon {} must be ≥ 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Iterative-attack hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Maximum iterations `K`.
    pub steps: usize,
    /// Step size; `None` means a quarter of the current radius.
    pub eta: Option<f64>,
    /// SGLD inverse temperature.
    pub beta: f64,
    pub eps_q: f64,
    pub eps_s: f64,
    /// AMAD attacks states above the `(1 − xi)` percentile of cost value.
    pub xi: f64,
    /// Step halvings tried before an ascent step that lowers `Q` is abandoned.
    pub backtracks: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            eta: None,
            beta: 10.0,
            eps_q: 1e-5,
            eps_s: 1e-5,
            xi: 0.1,
            backtracks: 4,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::Config(m));
        if self.steps == 0 {
            return bad("steps must be ≥ 1".into());
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return bad(format!("eta {eta} must be > 0"));
            }
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta {} must be > 0", self.beta));
        }
        if !(self.eps_q >= 0.0 && self.eps_s >= 0.0) {
            return bad("early-stop thresholds must be ≥ 0".into());
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad(format!("xi {} must lie in (0, 1)", self.xi));
        }
        Ok(())
    }

    pub fn step_size(&self, budget: &AttackBudget) -> f64 {
        self.eta.unwrap_or(budget.epsilon / 4.0)
    }
}

/// Nearest point of `B_p^ε(s0)` to `s`.
pub fn project(s0: &[f64], s: &[f64], budget: &AttackBudget) -> Vec<f64> {
    let eps = budget.epsilon;
    match budget.norm {
        Norm::Linf => s0
            .iter()
            .zip(s)
            .map(|(&c, &x)| x.clamp(c - eps, c + eps))
            .collect(),
        Norm::L2 => {
            let dist = Norm::L2.distance(s, s0);
            if dist <= eps {
                s.to_vec()
            } else {
                let scale = eps / dist;
                s0.iter().zip(s).map(|(&c, &x)| c + (x - c) * scale).collect()
            }
        }
    }
}

/// Random perturbation with `‖s′ − s‖_p` uniform on `[0, ε]`: independent
/// `U(−ε, ε)` shifts per coordinate under ℓ∞, a uniform direction with
/// `|U(−ε, ε)|` radius under ℓ2.
pub fn uniform_attack<R: Rng + ?Sized>(s: &[f64], budget: &AttackBudget, rng: &mut R) -> Vec<f64> {
    let eps = budget.epsilon;
    if eps == 0.0 {
        return s.to_vec();
    }
    match budget.norm {
        Norm::Linf => s.iter().map(|&x| x + rng.random_range(-eps..=eps)).collect(),
        Norm::L2 => {
            let dir: Vec<f64> = s.iter().map(|_| rng.sample(StandardNormal)).collect();
            let norm = Norm::L2.of(dir.iter().copied()).max(f64::MIN_POSITIVE);
            let radius = rng.random_range(-eps..=eps).abs();
            let out: Vec<f64> = s.iter().zip(&dir).map(|(&x, &d)| x + d / norm * radius).collect();
            project(s, &out, budget)
        }
    }
}

/// A differentiable function of the (perturbed) state that an attacker
/// pushes upward.
pub trait StateObjective {
    fn value(&self, s: &[f64]) -> Result<f64, AttackError>;
    fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError>;
}

/// `s ↦ Q(s0, μ(s))` where `μ` is the deterministic policy action.
pub struct PolicyQ<'a> {
    pub policy: &'a GaussianPolicy,
    pub q: &'a Critic,
    pub s0: &'a [f64],
}

impl StateObjective for PolicyQ<'_> {
    fn value(&self, s: &[f64]) -> Result<f64, AttackError> {
        let action = self.policy.mean_action(s)?;
        Ok(self.q.value(self.s0, Some(&action))?)
    }

    fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError> {
        let net = &self.policy.mean;
        let view = ndarray::ArrayView2::from_shape((1, s.len()), s).expect("row view");
        let trace = net.forward_trace(view)?;
        let pre: Vec<f64> = trace.output().row(0).to_vec();
        let action: Vec<f64> = pre.iter().map(|&u| squash(u)).collect();
        let (value, dq_da) = self.q.action_gradient(self.s0, &action)?;
        let d_pre: Vec<f64> = dq_da.iter().zip(&pre).map(|(g, &u)| g * squash_derivative(u)).collect();
        let d_out = ndarray::Array2::from_shape_vec((1, d_pre.len()), d_pre).expect("row");
        let (_, g) = net.backward(&trace, d_out.view());
        Ok((value, g.row(0).to_vec()))
    }
}

/// `s ↦ KL(π(·|s0) ‖ π(·|s))` on the pre-squash Gaussians.
pub struct KlShift<'a> {
    pub policy: &'a GaussianPolicy,
    reference_mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl<'a> KlShift<'a> {
    pub fn new(policy: &'a GaussianPolicy, s0: &[f64]) -> Result<Self, AttackError> {
        Ok(Self {
            policy,
            reference_mean: policy.pre_squash_mean(s0)?,
            log_std: policy.effective_log_std(),
        })
    }
}

impl StateObjective for KlShift<'_> {
    fn value(&self, s: &[f64]) -> Result<f64, AttackError> {
        let mean = self.policy.pre_squash_mean(s)?;
        Ok(gaussian_kl(&self.reference_mean, &self.log_std, &mean, &self.log_std))
    }

    fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError> {
        let net = &self.policy.mean;
        let view = ndarray::ArrayView2::from_shape((1, s.len()), s).expect("row view");
        let trace = net.forward_trace(view)?;
        let mean: Vec<f64> = trace.output().row(0).to_vec();
        let value = gaussian_kl(&self.reference_mean, &self.log_std, &mean, &self.log_std);
        // Same variance on both sides: ∂KL/∂μ = (μ − μ0) / σ².
        let d_mean: Vec<f64> = mean
            .iter()
            .zip(&self.reference_mean)
            .zip(&self.log_std)
            .map(|((m, m0), ls)| (m - m0) / (2.0 * ls).exp())
            .collect();
        let d_out = ndarray::Array2::from_shape_vec((1, d_mean.len()), d_mean).expect("row");
        let (_, g) = net.backward(&trace, d_out.view());
        Ok((value, g.row(0).to_vec()))
    }
}

/// Diagnostics from an iterative attack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackTrace {
    /// Objective at `s0` followed by the objective after each accepted step.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub early_stopped: bool,
}

/// Projected gradient ascent with step halving. Steps that would lower the
/// objective are retried with half the step up to `cfg.backtracks` times;
/// if none helps, the best iterate so far is returned.
pub fn projected_ascent<O: StateObjective + ?Sized>(
    s0: &[f64],
    objective: &O,
    budget: &AttackBudget,
    cfg: &AttackConfig,
) -> Result<(Vec<f64>, AttackTrace), AttackError> {
    budget.validate()?;
    cfg.validate()?;
    let mut trace = AttackTrace::default();
    if budget.epsilon == 0.0 {
        return Ok((s0.to_vec(), trace));
    }
    let eta = cfg.step_size(budget);
    let mut s = s0.to_vec();
    trace.values.push(objective.value(&s)?);

    for _ in 0..cfg.steps {
        trace.iterations += 1;
        let (q_cur, g) = match objective.value_and_grad(&s) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (v, g),
            _ => break,
        };
        let mut step = eta;
        let mut accepted = None;
        for _ in 0..=cfg.backtracks {
            let moved: Vec<f64> = s.iter().zip(&g).map(|(x, gi)| x + step * gi).collect();
            let cand = project(s0, &moved, budget);
            match objective.value(&cand) {
                Ok(qc) if qc.is_finite() && qc >= q_cur => {
                    accepted = Some((cand, qc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((cand, qc)) = accepted else { break };
        let ds = Norm::Linf.distance(&cand, &s);
        let dq = (qc - q_cur).abs();
        s = cand;
        trace.values.push(qc);
        if dq < cfg.eps_q && ds < cfg.eps_s {
            trace.early_stopped = true;
            break;
        }
    }
    Ok((s, trace))
}

fn check_q(attack: &'static str, q: &Critic) -> Result<(), AttackError> {
    const Q_FLAVORS: &[CriticFlavor] = &[CriticFlavor::RewardQ, CriticFlavor::CostQ];
    if q.flavor.takes_action() {
        Ok(())
    } else {
        Err(AttackError::WrongCritic {
            attack,
            expected: Q_FLAVORS,
            got: q.flavor,
        })
    }
}

/// Maximum-cost (with a `Q_c` critic) or maximum-reward (with `Q_r`) attack.
pub fn mc_mr_attack(
    s0: &[f64],
    policy: &GaussianPolicy,
    q_net: &Critic,
    budget: &AttackBudget,
    cfg: &AttackConfig,
) -> Result<Vec<f64>, AttackError> {
    check_q("MC/MR attack", q_net)?;
    let objective = PolicyQ { policy, q: q_net, s0 };
    Ok(projected_ascent(s0, &objective, budget, cfg)?.0)
}

/// Langevin ascent on an objective: `s ← Proj[s + η∇f(s) − √(2η/β)·v]`
/// (the descent form on `−f` with the SGLD noise term). Returns the last
/// iterate, or the best one seen if a gradient turns non-finite.
pub fn langevin_ascent<O: StateObjective + ?Sized, R: Rng + ?Sized>(
    s0: &[f64],
    objective: &O,
    budget: &AttackBudget,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, AttackTrace), AttackError> {
    budget.validate()?;
    cfg.validate()?;
    let mut trace = AttackTrace::default();
    if budget.epsilon == 0.0 {
        return Ok((s0.to_vec(), trace));
    }
    let eta = cfg.step_size(budget);
    let noise = (2.0 / (cfg.beta * eta)).sqrt();
    let mut s = s0.to_vec();
    let mut best = (s.clone(), objective.value(&s)?);
    trace.values.push(best.1);

    for _ in 0..cfg.steps {
        trace.iterations += 1;
        let (v_cur, grad) = match objective.value_and_grad(&s) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (v, g),
            _ => return Ok((best.0, trace)),
        };
        // g = ∇ℓ + noise·v with ℓ = −f.
        let moved: Vec<f64> = s
            .iter()
            .zip(&grad)
            .map(|(&x, &gi)| {
                let v: f64 = rng.sample(StandardNormal);
                let g = -gi + if noise > 0.0 { noise * v } else { 0.0 };
                x - eta * g
            })
            .collect();
        let cand = project(s0, &moved, budget);
        let v_new = objective.value(&cand)?;
        let ds = Norm::Linf.distance(&cand, &s);
        let dq = (v_new - v_cur).abs();
        s = cand;
        trace.values.push(v_new);
        if v_new > best.1 {
            best = (s.clone(), v_new);
        }
        if dq < cfg.eps_q && ds < cfg.eps_s {
            trace.early_stopped = true;
            break;
        }
    }
    Ok((s, trace))
}

/// Maximum-action-difference attack.
pub fn mad_attack<R: Rng + ?Sized>(
    s0: &[f64],
    policy: &GaussianPolicy,
    budget: &AttackBudget,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<f64>, AttackError> {
    if budget.epsilon == 0.0 {
        return Ok(s0.to_vec());
    }
    let objective = KlShift::new(policy, s0)?;
    Ok(langevin_ascent(s0, &objective, budget, cfg, rng)?.0)
}

/// Percentile with linear interpolation between order statistics
/// (`q ∈ [0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cost value `V_c(s) = Q_c(s, μ(s))` of each state.
pub fn cost_values(batch: &[Vec<f64>], policy: &GaussianPolicy, q_c: &Critic) -> Result<Vec<f64>, AttackError> {
    check_q("cost value", q_c)?;
    batch
        .iter()
        .map(|s| {
            let a = policy.mean_action(s)?;
            Ok(q_c.value(s, Some(&a))?)
        })
        .collect()
}

/// AMAD threshold: the `(1 − ξ)` percentile of the batch cost values.
pub fn amad_threshold(batch: &[Vec<f64>], policy: &GaussianPolicy, q_c: &Critic, cfg: &AttackConfig) -> Result<f64, AttackError> {
    if batch.is_empty() {
        return Err(AttackError::EmptyBatch);
    }
    Ok(percentile(&cost_values(batch, policy, q_c)?, 1.0 - cfg.xi))
}

/// Adaptive MAD: states whose cost value strictly exceeds the batch
/// threshold get a MAD perturbation, the rest pass through.
pub fn amad_attack<R: Rng + ?Sized>(
    batch: &[Vec<f64>],
    policy: &GaussianPolicy,
    vc_net: &Critic,
    budget: &AttackBudget,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, AttackError> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(AttackError::EmptyBatch);
    }
    let values = cost_values(batch, policy, vc_net)?;
    let threshold = percentile(&values, 1.0 - cfg.xi);
    batch
        .iter()
        .zip(values)
        .map(|(s, v)| {
            if v > threshold {
                mad_attack(s, policy, budget, cfg, rng)
            } else {
                Ok(s.clone())
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Uniform,
    Mc,
    Mr,
    Mad,
    Amad,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::None,
        AttackKind::Uniform,
        AttackKind::Mc,
        AttackKind::Mr,
        AttackKind::Mad,
        AttackKind::Amad,
    ];

    /// Column label used in evaluation tables.
    pub fn condition_name(self) -> &'static str {
        match self {
            AttackKind::None => "natural",
            AttackKind::Uniform => "uniform",
            AttackKind::Mc => "mc",
            AttackKind::Mr => "mr",
            AttackKind::Mad => "mad",
            AttackKind::Amad => "amad",
        }
    }

    pub fn from_condition(name: &str) -> Option<Self> {
        match name {
            "natural" | "none" => Some(AttackKind::None),
            "uniform" => Some(AttackKind::Uniform),
            "mc" => Some(AttackKind::Mc),
            "mr" => Some(AttackKind::Mr),
            "mad" => Some(AttackKind::Mad),
            "amad" => Some(AttackKind::Amad),
            _ => None,
        }
    }
}

/// A configured attacker bound to the networks it attacks, applied one
/// observation at a time during rollouts.
pub struct Adversary<'a> {
    pub kind: AttackKind,
    pub budget: AttackBudget,
    pub cfg: &'a AttackConfig,
    pub policy: &'a GaussianPolicy,
    pub q_r: &'a Critic,
    pub q_c: &'a Critic,
    /// Cost-value cutoff for AMAD, computed from a batch of visited states.
    pub amad_threshold: Option<f64>,
}

impl Adversary<'_> {
    pub fn is_identity(&self) -> bool {
        self.kind == AttackKind::None || self.budget.epsilon == 0.0
    }

    pub fn perturb<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>, AttackError> {
        if self.is_identity() {
            return Ok(s.to_vec());
        }
        match self.kind {
            AttackKind::None => Ok(s.to_vec()),
            AttackKind::Uniform => Ok(uniform_attack(s, &self.budget, rng)),
            AttackKind::Mc => mc_mr_attack(s, self.policy, self.q_c, &self.budget, self.cfg),
            AttackKind::Mr => mc_mr_attack(s, self.policy, self.q_r, &self.budget, self.cfg),
            AttackKind::Mad => mad_attack(s, self.policy, &self.budget, self.cfg, rng),
            AttackKind::Amad => {
                let threshold = self
                    .amad_threshold
                    .ok_or_else(|| AttackError::Config("AMAD needs a cost-value threshold".into()))?;
                let a = self.policy.mean_action(s)?;
                if self.q_c.value(s, Some(&a))? > threshold {
                    mad_attack(s, self.policy, &self.budget, self.cfg, rng)
                } else {
                    Ok(s.to_vec())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Linear(Vec<f64>);

    impl StateObjective for Linear {
        fn value(&self, s: &[f64]) -> Result<f64, AttackError> {
            Ok(s.iter().zip(&self.0).map(|(a, b)| a * b).sum())
        }
        fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError> {
            Ok((self.value(s)?, self.0.clone()))
        }
    }

    #[test]
    fn projection_examples() {
        let b = AttackBudget::linf(0.015);
        assert_eq!(project(&[0.5, 0.3], &[0.51, 0.29], &b), vec![0.51, 0.29]);
        let p = project(&[0.50, 0.30], &[0.53, 0.30], &b);
        assert!((p[0] - 0.515).abs() < 1e-15 && p[1] == 0.30);
        assert_eq!(project(&[0.5, 0.3], &p, &b), p);

        let b2 = AttackBudget { norm: Norm::L2, epsilon: 1.0 };
        let p = project(&[0.0, 0.0], &[3.0, 4.0], &b2);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_zero_radius_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(uniform_attack(&[0.2, 0.9], &AttackBudget::linf(0.0), &mut rng), vec![0.2, 0.9]);
    }

    #[test]
    fn constant_objective_stops_at_first_iteration() {
        let (s, trace) =
            projected_ascent(&[0.4, 0.4], &Linear(vec![0.0, 0.0]), &AttackBudget::linf(0.1), &AttackConfig::default())
                .unwrap();
        assert_eq!(s, vec![0.4, 0.4]);
        assert_eq!(trace.iterations, 1);
        assert!(trace.early_stopped);
    }

    #[test]
    fn zero_radius_returns_input() {
        let (s, trace) =
            projected_ascent(&[0.4, 0.4], &Linear(vec![1.0, 1.0]), &AttackBudget::linf(0.0), &AttackConfig::default())
                .unwrap();
        assert_eq!(s, vec![0.4, 0.4]);
        assert!(trace.iterations <= 1);
    }

    #[test]
    fn rejects_v_critic_for_mc() {
        let policy = GaussianPolicy {
            mean: Mlp::zeros(&[2, 1]),
            log_std: vec![0.0],
        };
        let v = Critic {
            net: Mlp::zeros(&[2, 1]),
            flavor: CriticFlavor::CostV,
        };
        assert!(matches!(
            mc_mr_attack(&[0.5, 0.5], &policy, &v, &AttackBudget::linf(0.1), &AttackConfig::default()),
            Err(AttackError::WrongCritic { .. })
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert!((percentile(&v, 0.9) - 89.1).abs() < 1e-12);
        assert_eq!(percentile(&v, 1.0), 99.0);
        assert_eq!(percentile(&[3.0, 3.0, 3.0], 0.5), 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig { steps: 0, ..Default::default() }.validate().is_err());
        assert!(AttackConfig { xi: 1.0, ..Default::default() }.validate().is_err());
        assert!(AttackConfig { eta: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(AttackBudget::linf(-0.1).validate().is_err());
        assert_eq!(AttackConfig::default().step_size(&AttackBudget::linf(0.02)), 0.005);
    }
}
