//! Derived random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by
//! `(master_seed, round, client, epoch)`, so the order in which clients are
//! simulated (or whether they run on several threads) never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag used for the server-side draw of the client subset.
pub const SERVER_TAG: u64 = u64::MAX;
/// Stream tag used for output selection and momentum initialisation.
pub const AUX_TAG: u64 = u64::MAX - 1;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into one 64-bit seed.
pub fn derive_seed(master: u64, round: u64, client: u64, epoch: u64) -> u64 {
    let mut h = mix64(master);
    for part in [round, client, epoch] {
        h = mix64(h ^ mix64(part));
    }
    h
}

/// Counter-based stream for the given key tuple.
pub fn stream(master: u64, round: u64, client: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, round, client, epoch))
}
