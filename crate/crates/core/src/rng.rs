//! Seed derivation. Every stochastic component takes a `u64` master seed; child
//! streams (per tree, per bootstrap replicate, per synthetic row block) get
//! their own seed via SplitMix64 so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for child stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut s = master ^ splitmix64(&mut stream.wrapping_add(0xD1B5_4A32_D192_ED03));
    splitmix64(&mut s)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
