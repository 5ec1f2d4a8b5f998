use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{TabularCmdp, TabularError};

/// Shape of randomly generated CMDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Concentration of the Dirichlet draws for transitions, `μ0` and policies.
    pub dirichlet_alpha: f64,
    /// Probability that a transition `(s, a, s′)` carries nonzero cost.
    pub cost_density: f64,
    pub c_max: f64,
    /// States besides `s` itself in each neighborhood.
    pub neighbors: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            n_states: 5,
            n_actions: 3,
            gamma: 0.9,
            dirichlet_alpha: 1.0,
            cost_density: 0.3,
            c_max: 1.0,
            neighbors: 2,
        }
    }
}

fn dirichlet<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let draw: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
        let total: f64 = draw.iter().sum();
        if total > 0.0 {
            let mut out: Vec<f64> = draw.iter().map(|x| x / total).collect();
            // Put the rounding residue on the largest entry.
            let residue = 1.0 - out.iter().sum::<f64>();
            let k = (0..n).max_by(|&i, &j| out[i].total_cmp(&out[j])).unwrap_or(0);
            out[k] += residue;
            return out;
        }
    }
}

/// Random instance: Dirichlet transition rows, Bernoulli cost sparsity with
/// uniform magnitudes in `(0, c_max]`, uniform rewards in `[0, 1)`.
pub fn random_instance<R: Rng + ?Sized>(cfg: &InstanceConfig, rng: &mut R) -> Result<TabularCmdp, TabularError> {
    let (s, a) = (cfg.n_states, cfg.n_actions);
    if !(cfg.dirichlet_alpha > 0.0) || !(0.0..=1.0).contains(&cfg.cost_density) || cfg.neighbors >= s.max(1) {
        return Err(TabularError::Instance(format!("unusable generator settings {cfg:?}")));
    }
    let mut p = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        p.extend(dirichlet(s, cfg.dirichlet_alpha, rng));
    }
    let r: Vec<f64> = (0..s * a * s).map(|_| rng.random::<f64>()).collect();
    let c: Vec<f64> = (0..s * a * s)
        .map(|_| {
            if rng.random::<f64>() < cfg.cost_density {
                cfg.c_max * (1.0 - rng.random::<f64>())
            } else {
                0.0
            }
        })
        .collect();
    let mu0 = dirichlet(s, cfg.dirichlet_alpha, rng);
    let neighborhoods = (0..s)
        .map(|i| {
            let mut nb = vec![i];
            nb.extend(sample(rng, s - 1, cfg.neighbors).into_iter().map(|j| if j >= i { j + 1 } else { j }));
            nb
        })
        .collect();
    TabularCmdp::new(s, a, p, r, c, cfg.c_max, cfg.gamma, mu0, neighborhoods)
}

/// Stochastic policy with Dirichlet rows.
pub fn random_policy<R: Rng + ?Sized>(n_states: usize, n_actions: usize, alpha: f64, rng: &mut R) -> Array2<f64> {
    let flat: Vec<f64> = (0..n_states).flat_map(|_| dirichlet(n_actions, alpha, rng)).collect();
    Array2::from_shape_vec((n_states, n_actions), flat).expect("shape")
}

/// Flat Dirichlet weights over `n` items.
pub(crate) fn dirichlet_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    dirichlet(n, 1.0, rng)
}

/// Instance on which the one-step bound is tight to its factor of two.
///
/// State 0 chooses between a safe sink (2) and a sink paying `C_m = 1`
/// every step (3); its neighbor 1 is observed with the opposite choice.
/// With `γ = 0.9` the worst one-step gap at state 0 is `1/(1−γ) = 10` while
/// the bound evaluates to 20, so any `L` understated by more than half is
/// caught.
pub fn tight_instance() -> (TabularCmdp, Array2<f64>) {
    let (s, a) = (4, 2);
    let at = |s0: usize, a0: usize, s2: usize| (s0 * a + a0) * s + s2;
    let mut p = vec![0.0; s * a * s];
    let mut c = vec![0.0; s * a * s];
    for a0 in 0..a {
        p[at(1, a0, 2)] = 1.0;
        p[at(2, a0, 2)] = 1.0;
        p[at(3, a0, 3)] = 1.0;
        c[at(3, a0, 3)] = 1.0;
    }
    p[at(0, 0, 2)] = 1.0;
    p[at(0, 1, 3)] = 1.0;
    c[at(0, 1, 3)] = 1.0;
    let nb = vec![vec![0, 1], vec![1], vec![2], vec![3]];
    let mdp = TabularCmdp::new(s, a, p, vec![0.0; s * a * s], c, 1.0, 0.9, vec![1.0, 0.0, 0.0, 0.0], nb)
        .expect("fixture is a valid instance");
    let pi = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5]).expect("shape");
    (mdp, pi)
}
