//! Deterministic random streams.
//!
//! Every random decision in a run comes from a ChaCha8 generator keyed by the
//! run seed and a stream id, so that per-client work never shares state and
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids for run-level randomness. Client streams start at
/// [`CLIENT_STREAM_BASE`].
pub mod streams {
    pub const PARTITION: u64 = 1;
    pub const INIT: u64 = 2;
    pub const INITIAL_TOPOLOGY: u64 = 3;
    pub const BASELINE_TOPOLOGY: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const GENERATOR: u64 = 6;
    pub const CLIENT_STREAM_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent stream `purpose` for client `client`.
pub fn client_stream(seed: u64, client: usize, purpose: u64) -> Rng {
    stream(
        seed,
        streams::CLIENT_STREAM_BASE + ((client as u64) << 8) + purpose,
    )
}

/// Purposes for [`client_stream`].
pub mod purpose {
    pub const INIT: u64 = 0;
    pub const PAIRS: u64 = 1;
    pub const LABEL_DROP: u64 = 2;
    pub const EDGE_DROP: u64 = 3;
}
