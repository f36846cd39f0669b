//! Seeded random streams.
//!
//! Every source of randomness in a run is a ChaCha8 stream (a counter-based
//! generator) keyed by a 64-bit seed and a stream id. Seeds for sweep cells
//! are derived from the master seed with [`derive_seed`], a SplitMix64 fold
//! over the cell coordinates. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat method) scaled by the standard
//! deviation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Independent streams owned by a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Oracle sampling.
    Oracle = 1,
    /// Channel noise.
    Channel = 2,
    /// Public randomness shared by encoder and decoder.
    Shared = 3,
    /// Encoder-private randomness (stochastic rounding).
    Private = 4,
    /// Problem construction (e.g. the sign vector of the hard instance).
    Problem = 5,
}

/// One SplitMix64 finalization step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master`: `h <- splitmix64(h ^ part)` for each part.
///
/// Changing any one part changes the result; the order of parts matters.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ p))
}

/// 64-bit FNV-1a of a label, used to turn scheme names into seed parts.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A generator for `stream` of the run keyed by `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Public randomness known to both ends of the link.
///
/// Each iteration gets its own generator so the encoder and decoder can draw
/// the same rotation signs and sample sets without communicating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedRandomness {
    seed: u64,
}

impl SharedRandomness {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator for draw number `iteration`.
    pub fn at(&self, iteration: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[iteration]));
        rng.set_stream(Stream::Shared as u64);
        rng
    }
}

/// Per-endpoint cursor over [`SharedRandomness`].
#[derive(Debug, Clone)]
pub struct SharedCursor {
    source: SharedRandomness,
    next: u64,
}

impl SharedCursor {
    pub fn new(source: SharedRandomness) -> Self {
        Self { source, next: 0 }
    }

    /// Index of the next draw.
    pub fn position(&self) -> u64 {
        self.next
    }

    /// Consumes the next draw.
    pub fn advance(&mut self) -> (u64, SimRng) {
        let it = self.next;
        self.next += 1;
        (it, self.source.at(it))
    }
}
