use std::time::Instant;

use cofc::attacks::{
    amad_attack, amad_threshold, cost_values, mc_mr_attack, project, projected_ascent, uniform_attack, Adversary,
    AttackBudget, AttackConfig, AttackError, AttackKind, Norm, PolicyQ, StateObjective,
};
use cofc::nn::{Critic, CriticFlavor, Dense, GaussianPolicy, Mlp};
use ndarray::{arr1, arr2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nets(rng: &mut ChaCha8Rng) -> (GaussianPolicy, Critic, Critic) {
    let mut policy = GaussianPolicy::new(2, 1, &[6, 6], -0.5, rng);
    policy.mean = Mlp::orthogonal(&[2, 6, 6, 1], 1.0, rng);
    (
        policy,
        Critic::new(CriticFlavor::RewardQ, 2, 1, &[6, 6], rng),
        Critic::new(CriticFlavor::CostQ, 2, 1, &[6, 6], rng),
    )
}

fn random_state(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)]
}

#[test]
fn containment_fuzz_across_attackers() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = AttackConfig::default();
    let kinds = [AttackKind::Uniform, AttackKind::Mc, AttackKind::Mr, AttackKind::Mad, AttackKind::Amad];
    let mut worst = 0.0f64;
    let mut count = 0;
    for block in 0..1000 {
        let (policy, q_r, q_c) = nets(&mut rng);
        let batch: Vec<Vec<f64>> = (0..20).map(|_| random_state(&mut rng)).collect();
        let threshold = amad_threshold(&batch, &policy, &q_c, &cfg).unwrap();
        for i in 0..100 {
            let norm = if i % 2 == 0 { Norm::Linf } else { Norm::L2 };
            let epsilon = if block % 50 == 0 { 0.0 } else { rng.random_range(0.0..0.3) };
            let adv = Adversary {
                kind: kinds[i % kinds.len()],
                budget: AttackBudget { norm, epsilon },
                cfg: &cfg,
                policy: &policy,
                q_r: &q_r,
                q_c: &q_c,
                amad_threshold: Some(threshold),
            };
            let s = random_state(&mut rng);
            let out = adv.perturb(&s, &mut rng).unwrap();
            let d = norm.distance(&out, &s);
            assert!(d <= epsilon + 1e-12, "{:?} moved {d} > {epsilon}", adv.kind);
            if epsilon == 0.0 {
                assert_eq!(out, s);
            }
            worst = worst.max(d - epsilon);
            count += 1;
        }
    }
    assert_eq!(count, 100_000);
    eprintln!("largest excess over epsilon: {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

/// `s ↦ w·s`.
struct Linear(Vec<f64>);

impl StateObjective for Linear {
    fn value(&self, s: &[f64]) -> Result<f64, AttackError> {
        Ok(s.iter().zip(&self.0).map(|(a, b)| a * b).sum())
    }
    fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError> {
        Ok((self.value(s)?, self.0.clone()))
    }
}

/// `s ↦ −½ (s − c)ᵀ A (s − c)` with `A` symmetric positive definite.
struct Quadratic {
    a: [[f64; 2]; 2],
    c: [f64; 2],
}

impl StateObjective for Quadratic {
    fn value(&self, s: &[f64]) -> Result<f64, AttackError> {
        let d = [s[0] - self.c[0], s[1] - self.c[1]];
        let ad = [self.a[0][0] * d[0] + self.a[0][1] * d[1], self.a[1][0] * d[0] + self.a[1][1] * d[1]];
        Ok(-0.5 * (d[0] * ad[0] + d[1] * ad[1]))
    }
    fn value_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>), AttackError> {
        let d = [s[0] - self.c[0], s[1] - self.c[1]];
        let g = vec![
            -(self.a[0][0] * d[0] + self.a[0][1] * d[1]),
            -(self.a[1][0] * d[0] + self.a[1][1] * d[1]),
        ];
        Ok((self.value(s)?, g))
    }
}

/// Argmax over the ℓ∞ ball on a grid of spacing ε/100.
fn grid_argmax(s0: &[f64], eps: f64, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best = (f64::NEG_INFINITY, s0.to_vec());
    for i in -100..=100 {
        for j in -100..=100 {
            let p = [s0[0] + eps * i as f64 / 100.0, s0[1] + eps * j as f64 / 100.0];
            let v = f(&p);
            if v > best.0 {
                best = (v, p.to_vec());
            }
        }
    }
    best.1
}

/// A policy whose mean action is the squashed state, and a Q critic linear
/// in the action, so `s ↦ Q(s0, μ(s))` is increasing along `sign(w)`.
fn monotone_pair(w: [f64; 2]) -> (GaussianPolicy, Critic) {
    let identity = Dense {
        weight: arr2(&[[1.0, 0.0], [0.0, 1.0]]),
        bias: arr1(&[0.0, 0.0]),
    };
    let policy = GaussianPolicy {
        mean: Mlp::from_layers(vec![identity]).unwrap(),
        log_std: vec![-0.5, -0.5],
    };
    let q = Dense {
        weight: arr2(&[[0.0], [0.0], [w[0]], [w[1]]]),
        bias: arr1(&[0.0]),
    };
    let critic = Critic {
        net: Mlp::from_layers(vec![q]).unwrap(),
        flavor: CriticFlavor::CostQ,
    };
    (policy, critic)
}

#[test]
fn linear_objective_reaches_the_corner() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = AttackConfig::default();
    for _ in 0..50 {
        let eps = rng.random_range(0.01..0.2);
        let budget = AttackBudget::linf(eps);
        let eta = cfg.step_size(&budget);
        let s0 = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let w = [sign(&mut rng) * rng.random_range(3.0..6.0), sign(&mut rng) * rng.random_range(3.0..6.0)];

        let (policy, q) = monotone_pair(w);
        let objective = PolicyQ { policy: &policy, q: &q, s0: &s0 };
        let grid = grid_argmax(&s0, eps, &|s| objective.value(s).unwrap());
        let attacked = mc_mr_attack(&s0, &policy, &q, &budget, &cfg).unwrap();
        assert!(Norm::Linf.distance(&attacked, &grid) <= eta, "{attacked:?} vs {grid:?}");

        let lin = Linear(w.to_vec());
        let (s, _) = projected_ascent(&s0, &lin, &budget, &cfg).unwrap();
        let grid = grid_argmax(&s0, eps, &|s| lin.value(s).unwrap());
        assert!(Norm::Linf.distance(&s, &grid) <= eta);
    }
}

#[test]
fn concave_quadratic_reaches_interior_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = AttackConfig::default();
    for _ in 0..50 {
        let eps = rng.random_range(0.01..0.2);
        let budget = AttackBudget::linf(eps);
        let eta = cfg.step_size(&budget);
        let s0 = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let c = [s0[0] + rng.random_range(-0.7..0.7) * eps, s0[1] + rng.random_range(-0.7..0.7) * eps];
        // Curvature on the scale of the ball so ascent with η = ε/4 contracts.
        let (l1, l2) = (rng.random_range(0.5..1.5) / eps, rng.random_range(0.5..1.5) / eps);
        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (co, si) = (th.cos(), th.sin());
        let a = [
            [l1 * co * co + l2 * si * si, (l1 - l2) * co * si],
            [(l1 - l2) * co * si, l1 * si * si + l2 * co * co],
        ];
        let quad = Quadratic { a, c };
        let (s, trace) = projected_ascent(&s0, &quad, &budget, &cfg).unwrap();
        let grid = grid_argmax(&s0, eps, &|s| quad.value(s).unwrap());
        assert!(Norm::Linf.distance(&s, &grid) <= 2.0 * eta, "{s:?} vs {grid:?}");
        assert!(trace.values.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn mc_and_mr_are_ascent_on_policy_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = AttackConfig::default();
    for _ in 0..100 {
        let (policy, q_r, q_c) = nets(&mut rng);
        let s0 = random_state(&mut rng);
        let budget = AttackBudget::linf(rng.random_range(0.01..0.2));
        for q in [&q_r, &q_c] {
            let objective = PolicyQ { policy: &policy, q, s0: &s0 };
            let (expected, trace) = projected_ascent(&s0, &objective, &budget, &cfg).unwrap();
            assert_eq!(mc_mr_attack(&s0, &policy, q, &budget, &cfg).unwrap(), expected);
            assert!(objective.value(&expected).unwrap() >= trace.values[0]);
        }
    }
}

#[test]
fn amad_perturbs_exactly_the_top_decile() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (policy, _, q_c) = nets(&mut rng);
    let batch: Vec<Vec<f64>> = (0..100).map(|_| random_state(&mut rng)).collect();
    let values = cost_values(&batch, &policy, &q_c).unwrap();
    let mut order: Vec<usize> = (0..100).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let top: Vec<usize> = order[90..].to_vec();

    let out = amad_attack(&batch, &policy, &q_c, &AttackBudget::linf(0.05), &AttackConfig::default(), &mut rng).unwrap();
    let moved: Vec<usize> = (0..100).filter(|&i| out[i] != batch[i]).collect();
    let mut expected = top.clone();
    expected.sort();
    assert_eq!(moved, expected);
}

#[test]
fn uniform_noise_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let eps = 0.1;
    let n = 200_000;
    let s = [0.5, 0.5];
    let (mut sum, mut sq) = ([0.0; 2], [0.0; 2]);
    for _ in 0..n {
        let x = uniform_attack(&s, &AttackBudget::linf(eps), &mut rng);
        for k in 0..2 {
            let d = x[k] - s[k];
            sum[k] += d;
            sq[k] += d * d;
        }
    }
    let var = eps * eps / 3.0;
    for k in 0..2 {
        let mean = sum[k] / n as f64;
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt(), "mean {mean}");
        assert!((sq[k] / n as f64 - var).abs() < 0.02 * var);
    }

    let l2 = AttackBudget { norm: Norm::L2, epsilon: eps };
    let radius: f64 = (0..n).map(|_| Norm::L2.distance(&uniform_attack(&s, &l2, &mut rng), &s)).sum::<f64>() / n as f64;
    assert!((radius - eps / 2.0).abs() < 4.0 * eps / (12.0 * n as f64).sqrt());
}

#[test]
fn projection_is_idempotent_and_contained() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..10_000 {
        let s0 = random_state(&mut rng);
        let x: Vec<f64> = s0.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        for norm in [Norm::Linf, Norm::L2] {
            let b = AttackBudget { norm, epsilon: rng.random_range(0.0..0.5) };
            let p = project(&s0, &x, &b);
            assert!(norm.distance(&p, &s0) <= b.epsilon + 1e-12);
            assert!(norm.distance(&project(&s0, &p, &b), &p) <= 1e-15);
        }
    }
}
