//! Deterministic seed derivation.
//!
//! All randomness in a run flows from one global seed. Each stage (and each
//! worker/epoch/document stream inside a stage) derives its own seed with
//! [`derive_seed`] so that streams are independent, reproducible, and stable
//! across releases (no reliance on `std`'s unstable hashers).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable forever.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base`, a stage label, and stream indices.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    let mut state = mix(base);
    for b in label.as_bytes() {
        state = mix(state ^ u64::from(*b));
    }
    for ix in indices {
        state = mix(state ^ *ix);
    }
    state
}

/// A seeded RNG for the stream identified by `(base, label, indices)`.
pub fn stream_rng(base: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, indices))
}
