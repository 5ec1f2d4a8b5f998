use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NnError, Parameters};

/// Fully connected layer computing `x · weight + bias` with `weight` stored
/// as `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multilayer perceptron with tanh hidden activations and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Layer inputs recorded during a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NnError::Shape(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_dim() {
                return Err(NnError::Shape("bias length differs from layer width".into()));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with the given layer sizes, e.g. `[2, 256, 256, 1]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    /// Orthogonal initialization with gain √2 on hidden layers and
    /// `output_gain` on the last layer; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == last { output_gain } else { 2f64.sqrt() };
            layer.weight = orthogonal_matrix(layer.input_dim(), layer.output_dim(), rng) * gain;
        }
        net
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::output_dim));
        sizes
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    fn check_input(&self, width: usize) -> Result<(), NnError> {
        if width != self.input_dim() {
            return Err(NnError::Dim {
                expected: self.input_dim(),
                got: width,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Row-wise forward pass over an `n × input_dim` batch.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i != last {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace, NnError> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i != last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            h = z;
        }
        Ok(Trace { inputs, output: h })
    }

    /// Reverse pass: given `d_out = ∂loss/∂output` for a traced batch, returns
    /// the parameter gradient (summed over rows) and `∂loss/∂input` per row.
    pub fn backward(&self, trace: &Trace, d_out: ArrayView2<f64>) -> (Mlp, Array2<f64>) {
        assert_eq!(d_out.dim(), trace.output.dim(), "cotangent shape");
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = d_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let h = &trace.inputs[i];
            let weight = h.t().dot(&g).as_standard_layout().into_owned();
            let bias = g.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            let mut g_in = g.dot(&layer.weight.t());
            if i > 0 {
                g_in.zip_mut_with(h, |gi, &hi| *gi *= 1.0 - hi * hi);
            }
            g = g_in;
        }
        grads.reverse();
        (Mlp { layers: grads }, g)
    }

    /// Gradient of a scalar-output network with respect to its input.
    pub fn grad_wrt_input(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if self.output_dim() != 1 {
            return Err(NnError::NotScalar(self.output_dim()));
        }
        self.check_input(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let trace = self.forward_trace(view)?;
        let (_, g) = self.backward(&trace, Array2::ones((1, 1)).view());
        Ok(g.into_raw_vec_and_offset().0)
    }

    /// Value and parameter gradient of `loss(output)` over a batch. The
    /// closure returns the loss and its gradient with respect to the outputs.
    pub fn grad_wrt_params<F>(&self, x: ArrayView2<f64>, loss: F) -> Result<(f64, Mlp), NnError>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let trace = self.forward_trace(x)?;
        let (value, d_out) = loss(&trace.output);
        if !value.is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let (grads, _) = self.backward(&trace, d_out.view());
        Ok((value, grads))
    }

    /// `self ← (1 − tau)·self + tau·online`.
    pub fn polyak_update(&mut self, online: &Mlp, tau: f64) -> Result<(), NnError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(NnError::Shape(format!("polyak tau {tau} outside (0, 1]")));
        }
        if self.sizes() != online.sizes() {
            return Err(NnError::Shape(format!(
                "target {:?} vs online {:?}",
                self.sizes(),
                online.sizes()
            )));
        }
        for (t, o) in self.param_slices_mut().into_iter().zip(online.param_slices()) {
            for (ti, oi) in t.iter_mut().zip(o) {
                *ti = (1.0 - tau) * *ti + tau * oi;
            }
        }
        Ok(())
    }
}

impl Parameters for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// `rows × cols` matrix with orthonormal rows or columns (whichever is
/// fewer), via modified Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // `short` orthonormal vectors of length `long`.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        if rows >= cols {
            basis[j][i]
        } else {
            basis[i][j]
        }
    })
}
