//! Fan-out of one master seed into independent per-purpose seeds.
//!
//! `derive(master, domain, index)` is the first eight bytes (little endian)
//! of `SHA-256(master_le ‖ domain ‖ 0x00 ‖ index_le)`. Distinct domains or
//! indices give unrelated streams, and the mapping never changes between
//! builds or platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(master: u64, domain: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(domain.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(master: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, domain, index))
}
