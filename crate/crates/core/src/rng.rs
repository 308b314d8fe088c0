//! Seeded, schedule-independent random streams.
//!
//! Every consumer of randomness (weight init, server pretraining, each
//! client in each round, dataset sampling, the train/test split) owns a
//! [`RngStream`] keyed by `(seed, stream_id)`. The generator is ChaCha8 with
//! the stream id mapped onto ChaCha's 64-bit stream counter, so the draws for
//! a key never depend on which thread runs it or in what order.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reserved stream ids.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SERVER: u64 = 2;
    pub const ASSEMBLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SYNTH: u64 = 5;
    const SAMPLING: u64 = 6;

    const CLIENT_BASE: u64 = 1 << 16;

    /// Stream for `client_id` during federated round `iteration` (1-based).
    pub fn client(client_id: usize, iteration: usize) -> u64 {
        ((iteration as u64) << 32) | (CLIENT_BASE + client_id as u64)
    }

    /// Stream choosing the participating clients of round `iteration`.
    pub fn sampling(iteration: usize) -> u64 {
        ((iteration as u64) << 32) | SAMPLING
    }
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 high bits -> exactly representable dyadic rational.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Derive an independent seed for repetition `index` of an experiment.
///
/// SplitMix64 finalizer over the base seed and index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(base ^ mix(index))
}
