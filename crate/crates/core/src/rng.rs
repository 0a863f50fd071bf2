//! Seed derivation. Every random consumer draws from its own ChaCha stream
//! keyed by `(master seed, purpose tag, index)`, so results never depend on
//! the order in which consumers run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

fn key(master: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn stream(master: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(key(master, tag, index))
}

/// Derives a child 64-bit seed for a sub-component.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let k = key(master, tag, index);
    u64::from_le_bytes(k[..8].try_into().unwrap())
}

/// Keyed hash of an identifier; used to rank records reproducibly
/// independent of the order they arrive in.
pub fn keyed_hash(master: u64, tag: &str, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(id.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}
