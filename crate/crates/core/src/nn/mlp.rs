//! Feed-forward controller with tanh hidden layers.

use ndarray::Axis;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Mat, NodeId, Tape};
use crate::error::{Error, Result};

/// Dense tanh network. The final layer is initialized to zero so a fresh
/// controller contributes no drift on top of the bridge term.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpController {
    /// (weight `[in, out]`, bias `[1, out]`) per layer.
    pub layers: Vec<(Mat, Mat)>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl MlpController {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden {
            layers.push((xavier(fan_in, width, rng), Mat::zeros((1, width))));
            fan_in = width;
        }
        layers.push((Mat::zeros((fan_in, output_dim)), Mat::zeros((1, output_dim))));
        MlpController {
            layers,
            input_dim,
            output_dim,
        }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|(w, _)| w.dim().1)
            .collect()
    }

    /// Batched evaluation: `[rows, input_dim] -> [rows, output_dim]`.
    pub fn forward(&self, inputs: &Mat) -> Result<Mat> {
        if inputs.dim().1 != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: inputs.dim().1,
            });
        }
        let last = self.layers.len() - 1;
        let mut h = inputs.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let mut z = h.dot(w);
            z += &b.broadcast(z.raw_dim()).unwrap();
            h = if i < last { z.mapv(f64::tanh) } else { z };
        }
        Ok(h)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.layers.len() {
            names.push(format!("layer{i}.w"));
            names.push(format!("layer{i}.b"));
        }
        names
    }

    pub fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w as &mut Mat, b as &mut Mat])
            .collect()
    }

    /// Register parameters as tape leaves; ids align with [`Self::params`].
    pub fn register(&self, tape: &mut Tape) -> TapedMlp {
        let layers = self
            .layers
            .iter()
            .map(|(w, b)| (tape.leaf(w.clone()), tape.leaf(b.clone())))
            .collect();
        TapedMlp {
            layers,
            input_dim: self.input_dim,
        }
    }
}

/// Tape-resident copy of the MLP parameters for one training step.
pub struct TapedMlp {
    layers: Vec<(NodeId, NodeId)>,
    input_dim: usize,
}

impl TapedMlp {
    pub fn forward(&self, tape: &mut Tape, inputs: NodeId) -> NodeId {
        debug_assert_eq!(tape.value(inputs).dim().1, self.input_dim);
        let last = self.layers.len() - 1;
        let mut h = inputs;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, *w);
            let z = tape.add_row(z, *b);
            h = if i < last { tape.tanh(z) } else { z };
        }
        h
    }

    pub fn param_ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

pub(crate) fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Mat {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut w = Mat::zeros((fan_in, fan_out));
    for row in w.axis_iter_mut(Axis(0)) {
        for cell in row {
            *cell = rng.random_range(-bound..bound);
        }
    }
    w
}
