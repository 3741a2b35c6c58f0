//! Sub-seed derivation.
//!
//! Every randomized component takes one top-level seed; independent streams
//! are derived by hashing `(seed, purpose, index)` with FNV-1a and feeding
//! the digest to a ChaCha8 generator. The scheme is fixed so that a run is
//! reproducible from its top-level seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(h: u64, bytes: &[u8]) -> u64 {
    let mut h = h;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a 64-bit sub-seed from `(base, purpose, index)`.
pub fn derive_seed(base: u64, purpose: &str, index: u64) -> u64 {
    let h = fnv1a(FNV_OFFSET, &base.to_le_bytes());
    let h = fnv1a(h, purpose.as_bytes());
    fnv1a(h, &index.to_le_bytes())
}

/// Seeded generator for the stream named by `(base, purpose, index)`.
pub fn stream_rng(base: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}
