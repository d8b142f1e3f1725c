//! Seed derivation.
//!
//! Every random operation in the toolkit draws from a ChaCha stream whose seed
//! is derived from a root seed and a label, so one number reproduces a whole
//! pipeline and parallel workers never share or race on a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `root` and a textual label (e.g. a stage name).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Derive a child seed for the `index`-th item of a stream.
pub fn derive_indexed(root: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(b"#");
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the `index`-th item of a stream rooted at `seed`.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    rng(derive_indexed(seed, index))
}
