//! Named random substreams derived from a single root seed.
//!
//! Every consumer of randomness asks for a stream by name (`"data/means"`,
//! `"init/head"`, `"shuffle/finetune"`, ...). Streams are independent ChaCha8
//! generators keyed by SHA-256 of the root seed and the name, so adding a new
//! consumer never perturbs an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, name: &str) -> Stream {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// A child tree whose streams are disjoint from this tree's.
    pub fn child(&self, name: &str) -> SeedTree {
        use rand::RngCore;
        SeedTree::new(self.stream(&format!("child:{name}")).next_u64())
    }
}
