//! Deterministic, counter-based RNG stream derivation.
//!
//! Every random draw in an experiment comes from a stream keyed by
//! `(master seed, tag path)` — e.g. `(seed, [ALGO, run, time step, particle])`
//! — so concurrent execution order cannot change any result.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 step; the standard 64-bit avalanche mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha8 stream from a master seed and a tag path.
///
/// Tags are folded into the seed state one by one, so `derive(s, &[a, b])`
/// and `derive(s, &[b, a])` produce unrelated streams.
pub fn derive_rng(master_seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = master_seed ^ 0x6a09_e667_f3bc_c908;
    splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x2545_f491_4f6c_dd1d);
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stream tag constants; keep values stable, they are part of the
/// reproducibility contract of persisted experiments.
pub mod tag {
    pub const DATASET: u64 = 1;
    pub const RUN: u64 = 2;
    pub const TIME_STEP: u64 = 3;
    pub const PARTICLE: u64 = 4;
    pub const RESAMPLE: u64 = 5;
    pub const CHAIN: u64 = 6;
}
