//! Seed handling.
//!
//! Every random stream in the toolkit is derived from one 64-bit master seed
//! with [`derive_seed`]: the stream label is mixed into the master seed with
//! two rounds of the SplitMix64 finalizer. Streams are then fed to
//! [`ChaCha8Rng`], so a run is fully determined by its master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label for Metropolis position sampling.
pub const STREAM_METROPOLIS: u64 = 1;
/// Stream label for Maxwellian velocity draws.
pub const STREAM_VELOCITIES: u64 = 2;
/// Stream label for bootstrap resampling.
pub const STREAM_BOOTSTRAP: u64 = 3;
/// Stream label for the twin-trajectory perturbation direction.
pub const STREAM_DIVERGENCE: u64 = 4;
/// Stream label for synthetic test data.
pub const STREAM_SYNTHETIC: u64 = 5;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of a named sub-stream from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_and_are_stable() {
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        // Reference value of the SplitMix64 sequence seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
