//! Counter-based random streams.
//!
//! Every simulated index `i` owns the ChaCha8 stream selected by `(seed, i)`:
//! the 256-bit key is expanded from `seed` with SplitMix64 and `i` is the
//! ChaCha stream id. Generating index `i` never touches the state of any other
//! index, so the draws do not depend on how work is split across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-index random stream handed to simulators.
pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with two labels into a fresh seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    base ^ splitmix64(splitmix64(a).wrapping_add(b.rotate_left(32)) ^ 0x5851_f42d_4c95_7f2d)
}

/// The stream owned by `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
