//! Seeded random streams.
//!
//! Every random quantity comes from a ChaCha8 generator keyed by a 64-bit
//! seed and a 64-bit stream id. Replicate `i` of an experiment always reads
//! stream `i`, so results do not depend on how replicates are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for release-mechanism noise. Chain replicates use small
/// stream ids, so the two never overlap.
pub const MECHANISM_STREAM: u64 = 1 << 63;

/// Stream reserved for drawing random experiment configurations.
pub const CONFIG_STREAM: u64 = (1 << 63) | (1 << 62);

/// Environment variable that overrides the seed of any CLI run.
pub const SEED_ENV: &str = "LANGEVIN_DP_SEED";

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with independent standard normal draws.
pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for z in out.iter_mut() {
        *z = StandardNormal.sample(rng);
    }
}
