//! The single seeded randomness root.
//!
//! Every component draws from its own ChaCha stream derived from
//! `(seed, component name)`, so adding a consumer never shifts the draws
//! seen by the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngRoot {
    seed: u64,
}

impl RngRoot {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a named component.
    pub fn stream(&self, component: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(component.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(key)
    }

    /// Stream for the `index`-th instance of a component (e.g. one per source).
    pub fn indexed_stream(&self, component: &str, index: u64) -> ChaCha8Rng {
        self.stream(&format!("{component}#{index}"))
    }
}
