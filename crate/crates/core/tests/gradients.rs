use std::time::Instant;

use cofc::nn::{Critic, CriticFlavor, Mlp, Parameters};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

fn central<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + H;
            let up = f(&x);
            x[i] = x0 - H;
            let down = f(&x);
            x[i] = x0;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn random_net(rng: &mut ChaCha8Rng, out: usize) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    sizes.extend((0..depth).map(|_| rng.random_range(2..=8)));
    sizes.push(out);
    Mlp::orthogonal(&sizes, 1.0, rng)
}

/// Quadratic-plus-linear loss on the outputs, with its output gradient.
fn loss(out: &Array2<f64>, weights: &Array2<f64>) -> (f64, Array2<f64>) {
    let value = out.iter().zip(weights).map(|(o, w)| 0.5 * o * o + w * o).sum();
    (value, out + weights)
}

#[test]
fn input_and_parameter_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..120 {
        let scalar = random_net(&mut rng, 1);
        let x: Vec<f64> = (0..scalar.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = scalar.grad_wrt_input(&x).unwrap();
        let fd = central(&x, |x| scalar.forward(x).unwrap()[0]);
        let e = rel_err(&g, &fd);
        assert!(e < TOL, "input gradient rel err {e}");
        worst.0 = worst.0.max(e);

        let out_dim = rng.random_range(1..=3);
        let net = random_net(&mut rng, out_dim);
        let rows = rng.random_range(1..=4);
        let batch = Array2::from_shape_fn((rows, net.input_dim()), |_| rng.random_range(-2.0..2.0));
        let weights = Array2::from_shape_fn((rows, out_dim), |_| rng.random_range(-1.0..1.0));
        let (_, grads) = net.grad_wrt_params(batch.view(), |o| loss(o, &weights)).unwrap();
        let theta = net.flat();
        let fd = central(&theta, |p| {
            let mut probe = net.clone();
            probe.set_flat(p).unwrap();
            loss(&probe.forward_batch(batch.view()).unwrap(), &weights).0
        });
        let e = rel_err(&grads.flat(), &fd);
        assert!(e < TOL, "parameter gradient rel err {e}");
        worst.1 = worst.1.max(e);
    }
    eprintln!("worst relative error: input {:.2e}, params {:.2e}", worst.0, worst.1);
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn batched_input_gradients_match_per_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = random_net(&mut rng, 2);
    let batch = Array2::from_shape_fn((3, net.input_dim()), |_| rng.random_range(-1.0..1.0));
    let trace = net.forward_trace(batch.view()).unwrap();
    let cot = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
    let (_, g) = net.backward(&trace, cot.view());
    for r in 0..3 {
        let row = batch.row(r).to_vec();
        let fd = central(&row, |x| {
            let y = net.forward(x).unwrap();
            y[0] * cot[[r, 0]] + y[1] * cot[[r, 1]]
        });
        assert!(rel_err(&g.row(r).to_vec(), &fd) < TOL);
    }
}

#[test]
fn critic_action_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let q = Critic::new(CriticFlavor::CostQ, 2, 1, &[6, 6], &mut rng);
        let obs = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let a = [rng.random_range(0.0..1.0)];
        let (v, g) = q.action_gradient(&obs, &a).unwrap();
        assert_eq!(v, q.value(&obs, Some(&a)).unwrap());
        let fd = central(&a, |a| q.value(&obs, Some(a)).unwrap());
        assert!(rel_err(&g, &fd) < TOL);
    }
}

