//! Seeding policy shared by every sampler in the crate.
//!
//! All randomness flows from a `u64` seed through [`ChaCha8Rng`], which is
//! portable and reproducible across platforms. Independent sub-streams (one per
//! matrix column, per resampled block, per Gaussian companion) are obtained by
//! hashing the parent seed with a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 mix of `(seed, stream)`; distinct streams give decorrelated seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags, so that e.g. the Gaussian companion of replicate `r` never
/// shares a stream with the trajectory of replicate `r`.
pub mod stream {
    pub const GAUSSIAN: u64 = 0x6761_7573_7300_0000;
    pub const GAUSSIAN_CONTROL: u64 = 0x6374_726c_0000_0000;
    pub const COLUMNS: u64 = 0x636f_6c73_0000_0000;
    pub const BLOCKS: u64 = 0x626c_6b73_0000_0000;
}
