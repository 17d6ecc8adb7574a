//! Seeded, independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream identifiers; each purpose draws from its own ChaCha stream so that, for a
/// fixed seed, resampling the noise never perturbs the design or the signal.
pub mod streams {
    pub const DESIGN: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const TEST_DESIGN: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const ORACLE_MC: u64 = 5;
    pub const COUPLED_FRAME: u64 = 6;
    /// Noise for resample `r` uses stream `NOISE_BASE + r`.
    pub const NOISE_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
