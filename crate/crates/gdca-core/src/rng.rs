//! Seed derivation and the deterministic RNG used everywhere.
//!
//! Every random decision in the engine flows from a master seed through
//! `derive_seed`, so any point of the pipeline (an init, the batch at step
//! n) can be regenerated in isolation. That is what makes resumed training
//! bit-identical to an uninterrupted run: nothing needs to replay the
//! stream, it is re-derived from (seed, purpose, index).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose tags for derived streams. Keeping them in one place avoids
/// accidental stream collisions between subsystems.
pub mod stream {
    pub const INIT_GENERATOR: u64 = 1;
    pub const INIT_D_IMAGE: u64 = 2;
    pub const INIT_D_FEATURE: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const EXTRACTOR: u64 = 5;
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from (master, stream, index).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    const PHI: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut h = mix(master.wrapping_add(PHI));
    h = mix(h ^ stream.wrapping_mul(PHI).wrapping_add(1));
    h = mix(h ^ index.wrapping_mul(PHI).wrapping_add(2));
    h
}

/// The one RNG flavor used by the engine.
pub type Rng = ChaCha20Rng;

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, stream, index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
