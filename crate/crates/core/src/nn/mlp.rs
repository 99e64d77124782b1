//! Dense multi-layer perceptron used as the feature extractor.
//!
//! Every layer computes `a = act(a_prev · Wᵀ + b)`; the activation is applied
//! after the last layer as well, so features are post-activation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::ParamBuffers;
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `(out × in)`, row-major.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Uniform in `[-s, s]` with `s = sqrt(1 / fan_in)`, weights and bias alike.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let s = (1.0 / in_dim as f64).sqrt();
        let mut weight = Matrix::zeros(out_dim, in_dim);
        for w in weight.as_mut_slice() {
            *w = rng.gen_range(-s..=s);
        }
        let bias = (0..out_dim).map(|_| rng.gen_range(-s..=s)).collect();
        Self { weight, bias }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!(
                    "layer {i}: bias length {} for {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::shape(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    l.in_dim()
                )));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Fresh network with widths `dims[0] → dims[1] → … → dims[n]`; layer `i`
    /// draws from the stream `"{name}/layer{i}"`.
    pub fn init(dims: &[usize], activation: Activation, seeds: &SeedTree, name: &str) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "MLP dims need an input and at least one layer width".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(w[0], w[1], &mut seeds.stream(&format!("{name}/layer{i}"))))
            .collect();
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    fn layer_forward(&self, l: &Dense, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul_t(&l.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&l.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Features `(batch × d)` for inputs `(batch × in)`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = self.layer_forward(l, &a)?;
            z.map_inplace(|v| self.activation.apply(v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<MlpTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for l in &self.layers {
            let z = self.layer_forward(l, &a)?;
            let mut next = z.clone();
            next.map_inplace(|v| self.activation.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(MlpTrace {
            inputs,
            pre,
            output: a,
        })
    }

    /// Accumulates parameter gradients into `grads` given `∂L/∂features`.
    pub fn backward(&self, trace: &MlpTrace, d_out: Matrix, grads: &mut MlpParams) -> Result<()> {
        if !self.same_shape(grads) {
            return Err(Error::shape("gradient buffers do not match the network"));
        }
        if d_out.rows() != trace.output.rows() || d_out.cols() != trace.output.cols() {
            return Err(Error::shape("upstream gradient does not match the features"));
        }
        let mut delta = d_out;
        for li in (0..self.layers.len()).rev() {
            let z = &trace.pre[li];
            let a = if li + 1 == self.layers.len() {
                &trace.output
            } else {
                &trace.inputs[li + 1]
            };
            for ((d, &zv), &av) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice())
                .zip(a.as_slice())
            {
                *d *= self.activation.derivative(zv, av);
            }
            let g = &mut grads.layers[li];
            delta.t_matmul_into(&trace.inputs[li], &mut g.weight)?;
            for r in 0..delta.rows() {
                for (gb, dv) in g.bias.iter_mut().zip(delta.row(r)) {
                    *gb += dv;
                }
            }
            if li > 0 {
                delta = delta.matmul(&self.layers[li].weight)?;
            }
        }
        Ok(())
    }
}

impl ParamBuffers for MlpParams {
    fn buffers(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }
}
