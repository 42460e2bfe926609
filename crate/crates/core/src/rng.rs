//! Seeded random streams.
//!
//! Every random quantity is drawn from ChaCha8 keyed by a 64-bit seed. Work
//! items that need independent draws (lattice bonds, benchmark instances)
//! select a ChaCha stream id instead of sharing one sequential generator, so
//! each item's values do not depend on how many draws preceded it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
