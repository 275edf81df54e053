//! Seeded random streams.
//!
//! A run owns one root seed; each subsystem derives an independent ChaCha
//! stream from `(root, label)` so new consumers never shift existing streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type PanRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, label: &str) -> PanRng {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        PanRng::from_seed(seed)
    }

    /// Stream for one indexed occurrence of a subsystem, e.g. one epoch.
    pub fn rng_indexed(&self, label: &str, index: u64) -> PanRng {
        self.rng(&format!("{label}#{index}"))
    }

    pub fn child(&self, label: &str) -> SeedStream {
        use rand::RngCore;
        SeedStream::new(self.rng(label).next_u64())
    }
}

/// Convenience for APIs that take a bare integer seed.
pub fn rng_from_seed(seed: u64) -> PanRng {
    SeedStream::new(seed).rng("")
}
