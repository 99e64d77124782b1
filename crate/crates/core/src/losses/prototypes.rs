use serde::{Deserialize, Serialize};

use crate::data::SourceDomain;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{MlpParams, ParamBuffers};

/// One fixed prototype per known class: the mean pretrained feature of that
/// class pooled over every source domain's training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    prototypes: Matrix,
    counts: Vec<usize>,
}

impl PrototypeBank {
    pub fn new(prototypes: Matrix, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != prototypes.rows() {
            return Err(Error::shape("prototype counts do not match rows"));
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        Ok(Self { prototypes, counts })
    }

    pub fn prototype(&self, class: usize) -> Result<&[f64]> {
        if class >= self.prototypes.rows() {
            return Err(Error::MissingPrototype(class));
        }
        Ok(self.prototypes.row(class))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// CSV rows `class_id,p0..p{d-1}` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class_id");
        for k in 0..self.feature_dim() {
            s.push_str(&format!(",p{k}"));
        }
        s.push('\n');
        for c in 0..self.num_classes() {
            s.push_str(&c.to_string());
            for v in self.prototypes.row(c) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

impl ParamBuffers for PrototypeBank {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.prototypes.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.prototypes.as_mut_slice()]
    }
}

/// Builds the bank from the source training splits with the frozen `f0`.
pub fn compute_prototypes(
    f0: &MlpParams,
    sources: &[SourceDomain],
    num_classes: usize,
) -> Result<PrototypeBank> {
    let d = f0.feature_dim();
    let mut sums = Matrix::zeros(num_classes, d);
    let mut counts = vec![0usize; num_classes];
    for src in sources {
        src.train.ensure_trainable("compute_prototypes")?;
        let feats = f0.forward(&src.train.x)?;
        for (r, &y) in src.train.y.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: num_classes,
                });
            }
            counts[y] += 1;
            for (s, v) in sums.row_mut(y).iter_mut().zip(feats.row(r)) {
                *s += v;
            }
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass(c));
        }
        for s in sums.row_mut(c) {
            *s /= n as f64;
        }
    }
    PrototypeBank::new(sums, counts)
}
