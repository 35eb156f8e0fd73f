use serde::{Deserialize, Serialize};

use super::tensor::{add_outer, add_transposed, affine, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    fn apply(self, v: &mut [f64]) {
        if self == Activation::Tanh {
            v.iter_mut().for_each(|x| *x = x.tanh());
        }
    }
}

/// Fully connected layer, applied independently at every timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out × in`
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        DenseParams { weights: Tensor::zeros(&[output, input]), bias: Tensor::zeros(&[output]), activation }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_size()];
        affine(&self.weights, self.bias.data(), x, &mut out);
        self.activation.apply(&mut out);
        out
    }

    /// Given the layer input, its activated output and dL/d(output), accumulates
    /// parameter gradients and returns dL/d(input).
    pub(crate) fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut DenseParams) -> Vec<f64> {
        let d_pre: Vec<f64> = match self.activation {
            Activation::Linear => dy.to_vec(),
            Activation::Tanh => dy.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect(),
        };
        add_outer(&mut grads.weights, &d_pre, x);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&d_pre) {
            *b += d;
        }
        let mut dx = vec![0.0; x.len()];
        add_transposed(&self.weights, &d_pre, &mut dx);
        dx
    }
}
