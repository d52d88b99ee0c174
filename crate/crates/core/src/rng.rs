//! Seeded random streams keyed by integer coordinates, so that results depend
//! only on `(seed, keys)` and never on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn keyed_rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &k in keys {
        state = splitmix64(state ^ splitmix64(k.wrapping_add(0xA5A5_A5A5)));
    }
    ChaCha8Rng::seed_from_u64(state)
}

// Stream domains.
pub(crate) const DOMAIN_INIT: u64 = 1;
pub(crate) const DOMAIN_AUGMENT: u64 = 2;
pub(crate) const DOMAIN_SPLIT: u64 = 3;
pub(crate) const DOMAIN_SHUFFLE: u64 = 4;
pub(crate) const DOMAIN_SYNTHETIC: u64 = 5;
