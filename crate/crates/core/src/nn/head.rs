//! Linear classification head, `logits = features · Wᵀ + b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::nn::mlp::Dense;
use crate::nn::ParamBuffers;
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `(C × d)`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "head bias length {} for {} classes",
                bias.len(),
                weight.rows()
            )));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("head parameters".into()));
        }
        Ok(Self { weight, bias })
    }

    /// Standard uniform init from the named stream.
    pub fn init(feature_dim: usize, num_classes: usize, seeds: &SeedTree, name: &str) -> Self {
        let d = Dense::init(feature_dim, num_classes, &mut seeds.stream(name));
        Self {
            weight: d.weight,
            bias: d.bias,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.weight.rows() == other.weight.rows() && self.weight.cols() == other.weight.cols()
    }

    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::shape(format!(
                "features have width {}, head expects {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        let mut z = features.matmul_t(&self.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Accumulates `∂L/∂W, ∂L/∂b` and, when asked, adds `∂L/∂features`
    /// into `d_features`.
    pub fn backward(
        &self,
        features: &Matrix,
        d_logits: &Matrix,
        grads: &mut HeadParams,
        d_features: Option<&mut Matrix>,
    ) -> Result<()> {
        if !self.same_shape(grads) {
            return Err(Error::shape("head gradient buffers do not match"));
        }
        d_logits.t_matmul_into(features, &mut grads.weight)?;
        for r in 0..d_logits.rows() {
            for (gb, dv) in grads.bias.iter_mut().zip(d_logits.row(r)) {
                *gb += dv;
            }
        }
        if let Some(df) = d_features {
            let back = d_logits.matmul(&self.weight)?;
            for (a, b) in df.as_mut_slice().iter_mut().zip(back.as_slice()) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Row `c` of `[W | b]`.
    pub fn augmented_row(&self, c: usize) -> Vec<f64> {
        let mut r = self.weight.row(c).to_vec();
        r.push(self.bias[c]);
        r
    }

    /// Per-class Euclidean distance between augmented rows.
    pub fn row_distances(&self, other: &HeadParams) -> Result<Vec<f64>> {
        if !self.same_shape(other) {
            return Err(Error::shape("heads differ in shape"));
        }
        Ok((0..self.num_classes())
            .map(|c| squared_distance(&self.augmented_row(c), &other.augmented_row(c)).sqrt())
            .collect())
    }
}

impl ParamBuffers for HeadParams {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), self.bias.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), self.bias.as_mut_slice()]
    }
}
