//! Counter-based random streams.
//!
//! Every replication of every experiment draws from its own ChaCha8 stream.
//! The 256-bit key is the SHA-256 digest of the experiment seed and the
//! replication index selects the ChaCha stream id, so streams never overlap
//! and do not depend on scheduling or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

const DOMAIN: &[u8] = b"biclab/stream/v1";

/// Stream for replication `index` of an experiment seeded with `seed`.
pub fn derive_stream(seed: u64, index: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, used when one experiment drives several independent
/// sub-experiments (e.g. one per dimension or per calibration point).
pub fn child_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"biclab/child/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
