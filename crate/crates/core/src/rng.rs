//! Seed derivation and per-stage random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream, keyed by a 64-bit
//! seed and a stage id, so stages never share state and a stage's draws do not
//! depend on how many values another stage consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage ids for the three-stage conditional sampler and the noise injector.
pub mod stage {
    pub const LABEL: u64 = 1;
    pub const STUDENT_NOISE: u64 = 2;
    pub const TEACHER_NOISE: u64 = 3;
    pub const INPUT_NOISE: u64 = 4;
    pub const TIE_JITTER: u64 = 5;
    pub const JOINT: u64 = 6;
}

/// A reproducible generator for `(seed, stage)`.
pub fn stream(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with an ordered list of integer keys.
///
/// The result depends only on the values, so work items keyed by
/// `(grid index, seed index)` get the same stream regardless of the order or
/// thread they run on.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}
