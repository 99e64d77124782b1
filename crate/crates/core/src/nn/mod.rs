//! Minimal dense network: MLP feature extractor, linear head, softmax and
//! cross-entropy, SGD with step decay, and a finite-difference checker.

mod gradcheck;
mod head;
mod mlp;
mod ops;
mod optim;
mod state;

pub use gradcheck::{compare_gradients, finite_difference_check, relative_error, GradCheckReport};
pub use head::HeadParams;
pub use mlp::{Activation, Dense, MlpParams, MlpTrace};
pub(crate) use ops::{cross_entropy_grad, neg_entropy_grad};
pub use ops::{argmax, cross_entropy, entropy, log_softmax, neg_entropy, softmax, softmax_rows};
pub use optim::{sgd_step, sgd_update, OptimizerState};
pub use state::{Frozen, GradSet, ModelState};

use sha2::{Digest, Sha256};

/// Uniform access to the flat parameter buffers of a parameter container.
pub trait ParamBuffers {
    fn buffers(&self) -> Vec<&[f64]>;
    fn buffers_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_scalars(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// SHA-256 over the little-endian bytes of every scalar, hex encoded.
    fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for b in self.buffers() {
            h.update((b.len() as u64).to_le_bytes());
            for v in b {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
