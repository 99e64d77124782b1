//! Trainable model state with frozen pretrained snapshots.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{HeadParams, MlpParams, ParamBuffers};

/// Read-only wrapper: the inner value can be inspected but never mutated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frozen<T>(T);

impl<T> Frozen<T> {
    pub fn new(value: T) -> Self {
        Frozen(value)
    }

    pub fn get(&self) -> &T {
        &self.0
    }

    /// Always fails; frozen parameters are immutable.
    pub fn try_mut(&mut self) -> Result<&mut T> {
        Err(Error::FrozenMutation(std::any::type_name::<T>()))
    }
}

impl<T> Deref for Frozen<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub f: MlpParams,
    pub h: HeadParams,
    f0: Frozen<MlpParams>,
    h_lp: Option<Frozen<HeadParams>>,
}

impl ModelState {
    /// `f` starts as an exact copy of `f0`.
    pub fn from_pretrained(f0: Frozen<MlpParams>, h: HeadParams) -> Result<Self> {
        if h.feature_dim() != f0.feature_dim() {
            return Err(Error::shape(format!(
                "head expects width {} but features are {}",
                h.feature_dim(),
                f0.feature_dim()
            )));
        }
        Ok(Self {
            f: f0.get().clone(),
            h,
            f0,
            h_lp: None,
        })
    }

    pub fn from_parts(
        f: MlpParams,
        h: HeadParams,
        f0: Frozen<MlpParams>,
        h_lp: Option<Frozen<HeadParams>>,
    ) -> Result<Self> {
        if !f.same_shape(&f0) {
            return Err(Error::shape("f and f0 differ in architecture"));
        }
        if f.activation() != f0.activation() {
            return Err(Error::shape("f and f0 differ in activation"));
        }
        if h.feature_dim() != f.feature_dim() {
            return Err(Error::shape("head width does not match features"));
        }
        if let Some(lp) = &h_lp {
            if !lp.same_shape(&h) {
                return Err(Error::shape("h_lp differs in shape from h"));
            }
        }
        Ok(Self { f, h, f0, h_lp })
    }

    pub fn f0(&self) -> &MlpParams {
        self.f0.get()
    }

    pub fn h_lp(&self) -> Option<&HeadParams> {
        self.h_lp.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.h.num_classes()
    }

    /// Records the linear-probed head. It can be set exactly once.
    pub fn set_head_snapshot(&mut self, h_lp: HeadParams) -> Result<()> {
        if self.h_lp.is_some() {
            return Err(Error::FrozenMutation("h_lp"));
        }
        if !h_lp.same_shape(&self.h) {
            return Err(Error::shape("h_lp differs in shape from h"));
        }
        self.h_lp = Some(Frozen::new(h_lp));
        Ok(())
    }

    pub fn num_trainable(&self) -> usize {
        self.f.num_scalars() + self.h.num_scalars()
    }
}

/// Gradient buffers mirroring the trainable parameters of a [`ModelState`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub f: MlpParams,
    pub h: HeadParams,
}

impl GradSet {
    pub fn zeros_for(state: &ModelState) -> Self {
        Self {
            f: state.f.zeros_like(),
            h: state.h.zeros_like(),
        }
    }

    pub fn matches(&self, state: &ModelState) -> bool {
        self.f.same_shape(&state.f) && self.h.same_shape(&state.h)
    }

    pub fn is_zero_f(&self) -> bool {
        self.f.buffers().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    pub fn is_zero_h(&self) -> bool {
        self.h.buffers().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    /// Flattened view in the same order as [`ModelState`] trainable scalars.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for b in self.f.buffers().into_iter().chain(self.h.buffers()) {
            v.extend_from_slice(b);
        }
        v
    }
}
