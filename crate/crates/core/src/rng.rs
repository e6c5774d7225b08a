//! Counter-derived random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! master seed and a path of counters, e.g. `(seed, replication, scheme,
//! replicate)`. Streams depend only on that path, never on the order in which
//! work units execute, so parallel runs reproduce sequential ones exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a counter path into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &c in path {
        state ^= c.wrapping_mul(GOLDEN).rotate_left(17) ^ out;
        out = splitmix64(&mut state);
    }
    out
}

/// ChaCha8 stream for `(seed, path...)`.
pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Seed for runs that were not given one explicitly.
pub fn fresh_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    let mut s = nanos ^ (std::process::id() as u64).rotate_left(32);
    splitmix64(&mut s)
}
