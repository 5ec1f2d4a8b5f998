use ndarray::Array2;
use serde::Serialize;

use super::{bellman, best_within, policy_eval, Flavor, TabularAttacker, TabularCmdp, TabularError};

/// One side-by-side evaluation of a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// State attaining the smallest margin, for per-state bounds.
    pub state: Option<usize>,
}

impl BoundCheck {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub ratio: f64,
    pub gamma: f64,
}

impl ContractionCheck {
    pub fn holds(&self) -> bool {
        self.ratio <= self.gamma + 1e-12
    }
}

fn total_variation(p: ndarray::ArrayView1<f64>, q: ndarray::ArrayView1<f64>) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Tightest `L` with `TV(π(·|s), π(·|s′)) ≤ L·d(s, s′)` over all
/// neighborhood pairs. Under the discrete metric `d = 1` off the diagonal.
pub fn lipschitz_constant(mdp: &TabularCmdp, policy: &Array2<f64>) -> f64 {
    let mut l: f64 = 0.0;
    for s in 0..mdp.n_states() {
        for &t in mdp.neighborhood(s) {
            if t != s {
                l = l.max(total_variation(policy.row(s), policy.row(t)));
            }
        }
    }
    l
}

/// `p_s = max_a Σ_{s′} p(s′|s,a)·[c(s,a,s′) > 0]`.
pub fn unsafe_mass(mdp: &TabularCmdp, s: usize) -> f64 {
    (0..mdp.n_actions())
        .map(|a| {
            (0..mdp.n_states())
                .filter(|&s2| mdp.signal(Flavor::Cost, s, a, s2) > 0.0)
                .map(|s2| mdp.p(s, a, s2))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Worst single-step attack at each state against
/// `2Lε(p_s C_m + γ C_m/(1−γ))`.
///
/// The attacked value substitutes the observation at the first step only
/// and follows `π` afterwards, so the left side is
/// `max_{s̃ ∈ B(s)} Σ_a (π(a|s̃) − π(a|s)) Q_c^π(s, a)`. The reported check is
/// the state with the smallest margin.
pub fn check_one_step_bound(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    lipschitz_l: f64,
    epsilon: f64,
) -> Result<BoundCheck, TabularError> {
    let v = policy_eval(mdp, policy, Flavor::Cost, None)?;
    let (g, cm) = (mdp.gamma(), mdp.c_max());
    let mut worst: Option<BoundCheck> = None;
    for s in 0..mdp.n_states() {
        let q: Vec<f64> = (0..mdp.n_actions()).map(|a| mdp.q_value(Flavor::Cost, &v, s, a)).collect();
        let lhs = mdp
            .ball(s, epsilon)
            .into_iter()
            .map(|t| (0..mdp.n_actions()).map(|a| (policy[[t, a]] - policy[[s, a]]) * q[a]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let rhs = 2.0 * lipschitz_l * epsilon * (unsafe_mass(mdp, s) * cm + g * cm / (1.0 - g));
        let check = BoundCheck { lhs, rhs, state: Some(s) };
        if worst.is_none_or(|w| check.margin() < w.margin()) {
            worst = Some(check);
        }
    }
    Ok(worst.expect("at least one state"))
}

/// Episodic bound
/// `κ + 2LεC_m(1/(1−γ) + 4γLε/(1−γ)²)(max_s p_s + γ/(1−γ))`
/// against the strongest deterministic attacker in the `ε`-ball.
pub fn check_episodic_bound(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    lipschitz_l: f64,
    epsilon: f64,
    kappa: f64,
) -> Result<BoundCheck, TabularError> {
    let natural = mdp.initial_value(&policy_eval(mdp, policy, Flavor::Cost, None)?);
    if natural > kappa {
        return Err(TabularError::Infeasible { value: natural, kappa });
    }
    let (_, lhs) = best_within(mdp, policy, Flavor::Cost, epsilon)?;
    let (g, cm) = (mdp.gamma(), mdp.c_max());
    let le = lipschitz_l * epsilon;
    let p_max = (0..mdp.n_states()).map(|s| unsafe_mass(mdp, s)).fold(0.0, f64::max);
    let rhs = kappa + 2.0 * le * cm * (1.0 / (1.0 - g) + 4.0 * g * le / (1.0 - g).powi(2)) * (p_max + g / (1.0 - g));
    Ok(BoundCheck { lhs, rhs, state: None })
}

/// `‖T v1 − T v2‖_∞ / ‖v1 − v2‖_∞` for the attacked operator. The signal
/// cancels in the difference, so the cost flavor stands in for both.
pub fn check_contraction(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    attacker: &TabularAttacker,
    v1: &[f64],
    v2: &[f64],
) -> Result<ContractionCheck, TabularError> {
    mdp.check_policy(policy)?;
    attacker.validate(mdp)?;
    if v1.len() != mdp.n_states() || v2.len() != mdp.n_states() {
        return Err(TabularError::Instance("value vectors must have one entry per state".into()));
    }
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let denom = sup(v1, v2);
    let ratio = if denom == 0.0 {
        0.0
    } else {
        let t1 = bellman(mdp, policy, Flavor::Cost, Some(attacker), v1);
        let t2 = bellman(mdp, policy, Flavor::Cost, Some(attacker), v2);
        sup(&t1, &t2) / denom
    };
    Ok(ContractionCheck { ratio, gamma: mdp.gamma() })
}
