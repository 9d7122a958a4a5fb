//! Reproducible random number substreams.
//!
//! Every Monte Carlo loop in the crate draws from a ChaCha stream keyed by
//! a master seed, with one independent substream per work item (replication
//! index, draw index, ...). Parallel and serial runs therefore consume
//! identical random numbers for identical seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type SubRng = ChaCha8Rng;

/// Independent substream `index` of the stream keyed by `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> SubRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
