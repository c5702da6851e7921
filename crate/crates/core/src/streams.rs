//! Counter-based random number streams.
//!
//! Every Monte Carlo replicate draws from its own ChaCha stream derived
//! from `(seed, context, replicate)`. Replicates can then be farmed out to
//! any number of threads in any order and still produce bit-identical
//! results, because no stream ever depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain-separation constants so that e.g. the forward and dual halves of
/// a duality check never share a stream even under the same seed.
pub const CTX_FORWARD: u64 = 0x66_77_64;
pub const CTX_DUAL: u64 = 0x64_75_61;
pub const CTX_SAMPLE: u64 = 0x73_6d_70;

/// RNG for one replicate of one component of an experiment.
pub fn replicate_rng(seed: u64, context: u64, replicate: u64) -> ChaCha8Rng {
    // Mix the context into the key; the replicate selects the stream.
    let key = seed ^ context.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(replicate);
    rng
}
