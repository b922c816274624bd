//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] created by
//! [`stream`]. A stream is identified by a base seed and a 64-bit stream id;
//! the two are mixed with SplitMix64 ([`derive_seed`]) into the generator
//! seed. The rules used elsewhere:
//!
//! - RON iteration `n` of a run with seed `s` sketches with `stream(s, n)`.
//! - Harness run for solver `i`, repeat `j`, config seed `s` uses run seed
//!   `derive_seed(s, (i << 32) | j)`.
//! - Harness problem instances use `derive_seed(s, PROBLEM_STREAM)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator name recorded in output metadata.
pub const GENERATOR: &str = "ChaCha8Rng(seed_from_u64(splitmix64-mixed seed))";

/// Stream id reserved for problem-instance generation in the harness.
pub const PROBLEM_STREAM: u64 = u64::MAX;

pub type SketchRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed and a stream id into an independent seed.
pub fn derive_seed(base: u64, stream_id: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream_id))
}

/// A generator seeded directly from `seed`.
pub fn seeded(seed: u64) -> SketchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The generator for stream `stream_id` under `base`.
pub fn stream(base: u64, stream_id: u64) -> SketchRng {
    seeded(derive_seed(base, stream_id))
}

/// One standard normal draw.
pub fn gaussian<R: rand::Rng + ?Sized>(r: &mut R) -> f64 {
    rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, r)
}

/// Run seed for solver index `solver` and repeat index `repeat`.
pub fn run_seed(base: u64, solver: usize, repeat: usize) -> u64 {
    derive_seed(base, ((solver as u64) << 32) | repeat as u64)
}
