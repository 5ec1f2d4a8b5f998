use serde::{Deserialize, Serialize};

use super::{NnError, Parameters};

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        if !grads.all_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        let n = params.num_params();
        if grads.num_params() != n {
            return Err(NnError::Shape(format!("{} gradients for {n} parameters", grads.num_params())));
        }
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
            self.t = 0;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (p, g) in params.param_slices_mut().into_iter().zip(grads.param_slices()) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *pi -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step<P: Parameters>(&self, params: &mut P, grads: &P) -> Result<(), NnError> {
        if !grads.all_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        if grads.num_params() != params.num_params() {
            return Err(NnError::Shape("gradient shape differs from parameters".into()));
        }
        params.add_scaled(grads, -self.lr);
        Ok(())
    }
}

pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut Adam) -> Result<(), NnError> {
    state.step(params, grads)
}

pub fn sgd_step<P: Parameters>(params: &mut P, grads: &P, lr: f64) -> Result<(), NnError> {
    Sgd { lr }.step(params, grads)
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for s in grads.param_slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A bare vector of parameters for optimizer tests.
    #[derive(Clone)]
    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn param_slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut p = Flat(vec![1.0, -2.0]);
        sgd_step(&mut p, &Flat(vec![0.0, 0.0]), 0.5).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_gradient() {
        let mut p = Flat(vec![1.0, 1.0]);
        let mut adam = Adam::new(0.1);
        adam_step(&mut p, &Flat(vec![3.0, -0.2]), &mut adam).unwrap();
        assert!((p.0[0] - 0.9).abs() < 1e-7);
        assert!((p.0[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = Flat(vec![1.0]);
        let mut adam = Adam::new(0.1);
        for _ in 0..200 {
            let g = Flat(vec![2.0 * x.0[0]]);
            adam.step(&mut x, &g).unwrap();
        }
        // Reference run of the same recurrence ends at x ≈ -7.2e-6.
        assert!(x.0[0].abs() < 1e-3, "x = {}", x.0[0]);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = Flat(vec![1.0]);
        assert_eq!(
            Adam::new(0.1).step(&mut p, &Flat(vec![f64::NAN])),
            Err(NnError::NonFinite("gradient"))
        );
        assert!(sgd_step(&mut p, &Flat(vec![f64::INFINITY]), 0.1).is_err());
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = Flat(vec![3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.0[0] - 0.6).abs() < 1e-12 && (g.0[1] - 0.8).abs() < 1e-12);
    }
}
