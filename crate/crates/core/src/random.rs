use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator `stream` derived from a single run seed.
///
/// Every random consumer in the crate draws from its own stream so that
/// adding or reordering consumers never perturbs the others.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers used by the pipeline.
pub mod streams {
    pub const PLANES: u64 = 0;
    pub const PROBES: u64 = 1;
    pub const HOLDER: u64 = 2;
    pub const FAMILY: u64 = 3;
    /// Base of the per-start streams of the Hölder ascent.
    pub const ASCENT: u64 = 1 << 32;
}
