//! Seeded random streams.
//!
//! Every consumer of randomness in a run owns a [`RandomStream`] keyed by
//! `(master_seed, stream)`. Streams are independent ChaCha8 sequences, so a
//! replica's noise does not depend on how many other replicas exist or on the
//! order in which they are stepped.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream id reserved for minibatch selection.
pub const BATCH_STREAM: u64 = 0;

/// Stream id carrying the Langevin noise of replica `replica`.
pub const fn noise_stream(replica: usize) -> u64 {
    replica as u64 + 1
}

#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RandomStream {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RandomStream::new(42, 3);
        let mut b = RandomStream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RandomStream::new(42, 1);
        let mut b = RandomStream::new(42, 2);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }
}
