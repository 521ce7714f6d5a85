//! Deterministic, scheduling-independent RNG streams.
//!
//! Every generated image gets its own stream derived from the master seed, a
//! string tag, and an index, so results do not depend on generation order or
//! thread count. The derivation is plain integer mixing, stable across
//! platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer, a well-mixed 64-bit permutation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(state: u64, value: u64) -> u64 {
    mix(state ^ value)
}

/// Collapse (master, tag, index) into one well-mixed 64-bit seed.
pub fn stream_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut state = mix(master);
    state = absorb(state, tag.len() as u64);
    for chunk in tag.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        state = absorb(state, u64::from_le_bytes(word));
    }
    absorb(state, index)
}

/// Independent RNG stream for one (tag, index) work item.
pub fn stream_rng(master: u64, tag: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(master, tag, index))
}
