//! Dense networks with hand-written reverse mode, the squashed Gaussian
//! policy, critics and first-order optimizers.
//!
//! Everything is `f64`. Gradients flow to parameters *and* inputs; the
//! observation attackers need the latter.

mod critic;
mod mlp;
mod optim;
mod policy;

pub use critic::{Critic, CriticFlavor};
pub use mlp::{Dense, Mlp, Trace};
pub use optim::{adam_step, clip_grad_norm, sgd_step, Adam, Sgd};
pub use policy::{gaussian_kl, kl_divergence, ln_squash_derivative, squash, squash_derivative, ActionSample, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} features, network expects {expected}")]
    Dim { expected: usize, got: usize },
    #[error("expected a scalar-output network, output has {0} entries")]
    NotScalar(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Anything whose trainable state is a list of `f64` slices. Gradients are
/// stored in a value of the same type so optimizers can zip the two.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        if values.len() != self.num_params() {
            return Err(NnError::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }
}
