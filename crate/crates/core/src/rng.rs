//! Named random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

/// Independent generator for `(root, name, index)`.
///
/// The 256-bit ChaCha key is the SHA-256 of the three parts, so streams with
/// different names or indices never overlap in practice and adding a new
/// stream never shifts an existing one.
pub fn substream(root: u64, name: &str, index: u64) -> StreamRng {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}
