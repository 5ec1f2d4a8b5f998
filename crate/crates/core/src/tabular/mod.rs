//! Exact machinery for small constrained MDPs: policy evaluation under a
//! state-substitution attacker, exhaustive attacker search, and checks of
//! the attack bounds and the Bellman contraction.
//!
//! States carry the discrete metric, so an attacker with radius `ε ≥ 1` may
//! move each state anywhere inside its declared neighborhood `B(s)`, and one
//! with `ε < 1` cannot move it at all.

mod bounds;
mod instance;
mod suite;

pub use bounds::{
    check_contraction, check_episodic_bound, check_one_step_bound, lipschitz_constant, unsafe_mass, BoundCheck,
    ContractionCheck,
};
pub use instance::{random_instance, random_policy, tight_instance, InstanceConfig};
pub use suite::{verify_suite, TheoremRow, VerifyConfig, VerifyReport};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TabularError {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("policy row {state} is not a distribution over {actions} actions")]
    Policy { state: usize, actions: usize },
    #[error("attacker maps state {state} to {target}, outside its neighborhood")]
    Attacker { state: usize, target: usize },
    #[error("attacker search space of {0} maps exceeds the enumeration limit")]
    SearchTooLarge(f64),
    #[error("policy is infeasible: cost value {value} exceeds kappa {kappa}")]
    Infeasible { value: f64, kappa: f64 },
}

pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Fixed-point accuracy of [`policy_eval`].
pub const EVAL_TOL: f64 = 1e-10;
pub const MAX_ATTACKERS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Reward,
    Cost,
}

/// Finite CMDP with per-state attack neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    n_states: usize,
    n_actions: usize,
    /// `p[(s·A + a)·S + s′]`
    p: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    c_max: f64,
    gamma: f64,
    mu0: Vec<f64>,
    neighborhoods: Vec<Vec<usize>>,
}

impl TabularCmdp {
    /// `p`, `r` and `c` are flat `[s][a][s′]` tensors. Every neighborhood
    /// must contain its own state.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p: Vec<f64>,
        r: Vec<f64>,
        c: Vec<f64>,
        c_max: f64,
        gamma: f64,
        mu0: Vec<f64>,
        neighborhoods: Vec<Vec<usize>>,
    ) -> Result<Self, TabularError> {
        let bad = |m: String| Err(TabularError::Instance(m));
        let (s, a) = (n_states, n_actions);
        if s == 0 || a == 0 {
            return bad("need at least one state and one action".into());
        }
        let len = s * a * s;
        if p.len() != len || r.len() != len || c.len() != len {
            return bad(format!("transition, reward and cost tensors must have {len} entries"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return bad(format!("gamma {gamma} must lie in [0, 1)"));
        }
        if !(c_max >= 0.0) || !c_max.is_finite() {
            return bad(format!("c_max {c_max} must be finite and ≥ 0"));
        }
        for (k, row) in p.chunks(s).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
                return bad(format!("p(·|s={}, a={}) is not a distribution", k / a, k % a));
            }
        }
        if r.iter().any(|x| !x.is_finite()) {
            return bad("rewards must be finite".into());
        }
        if c.iter().any(|&x| !(0.0..=c_max).contains(&x)) {
            return bad(format!("costs must lie in [0, {c_max}]"));
        }
        if mu0.len() != s || mu0.iter().any(|&x| !(x >= 0.0)) || (mu0.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
            return bad("mu0 must be a distribution over states".into());
        }
        if neighborhoods.len() != s {
            return bad(format!("need {s} neighborhoods"));
        }
        for (i, nb) in neighborhoods.iter().enumerate() {
            if !nb.contains(&i) || nb.iter().any(|&j| j >= s) {
                return bad(format!("neighborhood of state {i} must contain {i} and only valid states"));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            p,
            r,
            c,
            c_max,
            gamma,
            mu0,
            neighborhoods,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn neighborhood(&self, s: usize) -> &[usize] {
        &self.neighborhoods[s]
    }

    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + s2
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.p[self.idx(s, a, s2)]
    }

    pub fn signal(&self, flavor: Flavor, s: usize, a: usize, s2: usize) -> f64 {
        match flavor {
            Flavor::Reward => self.r[self.idx(s, a, s2)],
            Flavor::Cost => self.c[self.idx(s, a, s2)],
        }
    }

    /// `Q(s, a) = Σ_{s′} p(s′|s,a) [f(s,a,s′) + γ v(s′)]`.
    pub fn q_value(&self, flavor: Flavor, v: &[f64], s: usize, a: usize) -> f64 {
        (0..self.n_states)
            .map(|s2| self.p(s, a, s2) * (self.signal(flavor, s, a, s2) + self.gamma * v[s2]))
            .sum()
    }

    /// Neighborhood reachable with radius `epsilon` under the discrete metric.
    pub fn ball(&self, s: usize, epsilon: f64) -> Vec<usize> {
        if epsilon >= 1.0 {
            self.neighborhoods[s].clone()
        } else {
            vec![s]
        }
    }

    /// Number of deterministic attackers within radius `epsilon`.
    pub fn attacker_count(&self, epsilon: f64) -> f64 {
        (0..self.n_states).map(|s| self.ball(s, epsilon).len() as f64).product()
    }

    /// `μ0 · v`.
    pub fn initial_value(&self, v: &[f64]) -> f64 {
        self.mu0.iter().zip(v).map(|(m, x)| m * x).sum()
    }

    pub fn check_policy(&self, policy: &Array2<f64>) -> Result<(), TabularError> {
        let err = |state| TabularError::Policy {
            state,
            actions: self.n_actions,
        };
        if policy.nrows() != self.n_states {
            return Err(err(policy.nrows().min(self.n_states)));
        }
        if policy.ncols() != self.n_actions {
            return Err(err(0));
        }
        for (s, row) in policy.outer_iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) || (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
                return Err(err(s));
            }
        }
        Ok(())
    }
}

/// Deterministic state substitution `s ↦ ν(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularAttacker {
    pub map: Vec<usize>,
}

impl TabularAttacker {
    pub fn identity(n_states: usize) -> Self {
        Self {
            map: (0..n_states).collect(),
        }
    }

    pub fn validate(&self, mdp: &TabularCmdp) -> Result<(), TabularError> {
        if self.map.len() != mdp.n_states {
            return Err(TabularError::Instance(format!(
                "attacker covers {} states, instance has {}",
                self.map.len(),
                mdp.n_states
            )));
        }
        for (s, &t) in self.map.iter().enumerate() {
            if !mdp.neighborhood(s).contains(&t) {
                return Err(TabularError::Attacker { state: s, target: t });
            }
        }
        Ok(())
    }

    /// Policy as experienced in true states: row `s` is `π(·|ν(s))`.
    pub fn compose(&self, policy: &Array2<f64>) -> Array2<f64> {
        let mut out = policy.clone();
        for (s, &t) in self.map.iter().enumerate() {
            out.row_mut(s).assign(&policy.row(t));
        }
        out
    }
}

/// Markov attacker drawing `s̃ ~ ν(·|s)` afresh at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticAttacker {
    /// Row `s` is a distribution over substitute states.
    pub probs: Array2<f64>,
}

impl StochasticAttacker {
    /// Per-state mixture of deterministic maps with the given weights.
    pub fn mixture(maps: &[TabularAttacker], weights: &[f64]) -> Self {
        let n = maps.first().map_or(0, |m| m.map.len());
        let total: f64 = weights.iter().sum();
        let mut probs = Array2::zeros((n, n));
        for (m, w) in maps.iter().zip(weights) {
            for (s, &t) in m.map.iter().enumerate() {
                probs[[s, t]] += w / total;
            }
        }
        Self { probs }
    }

    pub fn compose(&self, policy: &Array2<f64>) -> Array2<f64> {
        self.probs.dot(policy)
    }
}

/// One application of the attacked Bellman operator:
/// `(T v)(s) = Σ_a π(a|ν(s)) Q(s, a)`.
pub fn bellman(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    flavor: Flavor,
    attacker: Option<&TabularAttacker>,
    v: &[f64],
) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            let seen = attacker.map_or(s, |nu| nu.map[s]);
            (0..mdp.n_actions)
                .map(|a| policy[[seen, a]] * mdp.q_value(flavor, v, s, a))
                .sum()
        })
        .collect()
}

/// Value of `π ∘ ν` by fixed-point iteration to [`EVAL_TOL`] in sup norm.
pub fn policy_eval(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    flavor: Flavor,
    attacker: Option<&TabularAttacker>,
) -> Result<Vec<f64>, TabularError> {
    mdp.check_policy(policy)?;
    if let Some(nu) = attacker {
        nu.validate(mdp)?;
    }
    let effective = match attacker {
        Some(nu) => nu.compose(policy),
        None => policy.clone(),
    };
    Ok(iterate(mdp, &effective, flavor))
}

/// Value of a policy under a stochastic attacker.
pub fn policy_eval_stochastic(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    flavor: Flavor,
    attacker: &StochasticAttacker,
) -> Result<Vec<f64>, TabularError> {
    mdp.check_policy(policy)?;
    Ok(iterate(mdp, &attacker.compose(policy), flavor))
}

fn iterate(mdp: &TabularCmdp, effective: &Array2<f64>, flavor: Flavor) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states];
    if mdp.gamma == 0.0 {
        return bellman(mdp, effective, flavor, None, &v);
    }
    // ‖v_k − v*‖ ≤ γ/(1−γ)·‖v_k − v_{k−1}‖
    let stop = EVAL_TOL * (1.0 - mdp.gamma) / mdp.gamma;
    loop {
        let next = bellman(mdp, effective, flavor, None, &v);
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff <= stop {
            return v;
        }
    }
}

/// All deterministic attackers within radius `epsilon`, in mixed-radix order.
pub fn enumerate_attackers(mdp: &TabularCmdp, epsilon: f64) -> Result<Vec<TabularAttacker>, TabularError> {
    let count = mdp.attacker_count(epsilon);
    if count > MAX_ATTACKERS {
        return Err(TabularError::SearchTooLarge(count));
    }
    let balls: Vec<Vec<usize>> = (0..mdp.n_states).map(|s| mdp.ball(s, epsilon)).collect();
    let mut digits = vec![0usize; mdp.n_states];
    let mut out = Vec::with_capacity(count as usize);
    loop {
        out.push(TabularAttacker {
            map: digits.iter().zip(&balls).map(|(&d, b)| b[d]).collect(),
        });
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(out);
            }
            digits[i] += 1;
            if digits[i] < balls[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustive search for the attacker maximizing `V_f^{π∘ν}(μ0)`. Ties keep
/// the first map in enumeration order, which starts at the identity.
pub fn best_deterministic_attacker(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    objective: Flavor,
) -> Result<(TabularAttacker, f64), TabularError> {
    best_within(mdp, policy, objective, 1.0)
}

pub(crate) fn best_within(
    mdp: &TabularCmdp,
    policy: &Array2<f64>,
    objective: Flavor,
    epsilon: f64,
) -> Result<(TabularAttacker, f64), TabularError> {
    mdp.check_policy(policy)?;
    let mut best: Option<(TabularAttacker, f64)> = None;
    for nu in enumerate_attackers(mdp, epsilon)? {
        let value = mdp.initial_value(&iterate(mdp, &nu.compose(policy), objective));
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((nu, value));
        }
    }
    Ok(best.expect("the identity is always enumerated"))
}
