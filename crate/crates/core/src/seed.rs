//! Seed derivation.
//!
//! Every randomized stage draws its seed from the master seed with
//! [`derive_seed`]: `splitmix64(master ^ splitmix64((stream << 32) | index))`.
//! The stream identifies the stage and the index identifies the trial inside
//! the stage (the division count for subspace generation, 0 otherwise).
//! K-means always uses index 0 so that every trial of a sweep, and the
//! baseline, cluster with the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage identifiers for [`derive_seed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Shuffle = 1,
    Bucket = 2,
    Autoencoder = 3,
    Kmeans = 4,
    Leiden = 5,
    Synthetic = 6,
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(((stream as u64) << 32) | (index & 0xFFFF_FFFF)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
