//! Fully connected ReLU network with a scalar linear output.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Shape (inputs, outputs).
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Parameter-shaped buffer, used for gradients and optimizer moments.
#[derive(Debug, Clone)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Params {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Params {
            weights: mlp.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            bias: mlp.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }
}

impl Mlp {
    /// `sizes` lists the input width, hidden widths and the output width (1).
    /// Weights and biases are drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weights = Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound));
                let bias = Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound));
                Dense { weights, bias }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    /// Raw (pre-sigmoid) outputs, one per row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weights) + &l.bias;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h.index_axis_move(Axis(1), 0)
    }

    /// Forward pass keeping every layer input, then backpropagation of
    /// `dloss(outputs) -> dL/doutputs`. Returns outputs, loss and gradient.
    pub fn forward_backward<F, E>(&self, x: ArrayView2<f64>, dloss: F) -> Result<(Array1<f64>, f64, Params), E>
    where
        F: FnOnce(&Array1<f64>) -> Result<(f64, Array1<f64>), E>,
    {
        let last = self.layers.len() - 1;
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weights) + &l.bias;
            inputs.push(h);
            h = if i < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        let out = h.index_axis_move(Axis(1), 0);
        let (loss, dout) = dloss(&out)?;
        let mut grads = Params::zeros_like(self);
        let mut delta = dout.insert_axis(Axis(1));
        for i in (0..self.layers.len()).rev() {
            let input = &inputs[i];
            grads.weights[i] = input.t().dot(&delta);
            grads.bias[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d = delta.dot(&self.layers[i].weights.t());
                // `input` is the ReLU output of layer i-1
                ndarray::Zip::from(&mut d).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d;
            }
        }
        Ok((out, loss, grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}
