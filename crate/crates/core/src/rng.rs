//! Reproducible random streams.
//!
//! Every consumer gets its own ChaCha8 key built from the master seed and a
//! domain tag; the replication (or draw) index selects the stream. Results
//! therefore do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Paths from `simulate`.
pub const DOMAIN_PATH: u64 = 0x5041_5448;
/// Limit-law draws.
pub const DOMAIN_LIMIT: u64 = 0x4c49_4d49;
/// Reference samples drawn by the Monte Carlo harness.
pub const DOMAIN_REFERENCE: u64 = 0x5245_4645;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
