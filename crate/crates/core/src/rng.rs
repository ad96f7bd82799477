//! Deterministic random-number plumbing.
//!
//! All randomness in the library flows through ChaCha12 (a named,
//! counter-based stream cipher generator), seeded either directly or through
//! the splitmix64-based per-replication derivation. Normal deviates come
//! from the inverse CDF applied to 53-bit uniforms, so a stream of draws is
//! reproducible from its seed alone, independent of platform and thread
//! schedule.

use crate::special::standard_normal_quantile;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; full-period bijective mixing of a 64-bit word.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` of a study with the given master seed:
/// `splitmix64(master_seed XOR index * golden_ratio)`. Replications can be
/// generated in any order (or in parallel) and still see identical streams.
pub(crate) fn replication_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) fn chacha(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Uniform draw strictly inside (0, 1): the top 53 bits of a 64-bit word,
/// offset by half a grid step so 0 and 1 are unreachable.
pub(crate) fn uniform_open01(rng: &mut ChaCha12Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw by inverse-CDF transform of a uniform draw.
pub(crate) fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    standard_normal_quantile(uniform_open01(rng))
}
