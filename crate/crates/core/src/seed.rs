//! Stable seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from the
//! run seed mixed with a context string (instance id, fold, noise level).
//! The mix is a fixed FNV-1a/splitmix64 composition so derived seeds do not
//! change between platforms or Rust releases, unlike `std::hash`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with each context part in turn.
pub fn derive(seed: u64, parts: &[&str]) -> u64 {
    let mut state = splitmix64(seed);
    for part in parts {
        let mut h = FNV_OFFSET;
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // separator so ["ab", "c"] and ["a", "bc"] differ
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
        state = splitmix64(state ^ h);
    }
    state
}

pub fn rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
