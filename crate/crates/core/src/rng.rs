//! Named random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed, so changing how many draws one consumer makes (for example a
//! larger maximum delay) never shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies an independent random stream under a common seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    LabelSampling,
    DelaySampling,
    DatasetGeneration,
    LabelNoise,
    ComparatorShuffle,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::LabelSampling => 1,
            Stream::DelaySampling => 2,
            Stream::DatasetGeneration => 3,
            Stream::LabelNoise => 4,
            Stream::ComparatorShuffle => 5,
        }
    }
}

/// Seeded generator for `stream`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
