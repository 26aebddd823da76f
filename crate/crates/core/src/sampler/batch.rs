use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchKind {
    /// Walk through successive random permutations of the data.
    #[default]
    EpochShuffle,
    /// I.i.d. uniform indices.
    WithReplacement,
}

/// Minibatch selection rule and batch size `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchPolicy {
    #[serde(default)]
    pub kind: BatchKind,
    pub size: usize,
}

impl BatchPolicy {
    pub fn epoch_shuffle(size: usize) -> Self {
        Self {
            kind: BatchKind::EpochShuffle,
            size,
        }
    }

    pub fn with_replacement(size: usize) -> Self {
        Self {
            kind: BatchKind::WithReplacement,
            size,
        }
    }

    pub fn validate(&self, data_len: usize) -> Result<()> {
        if self.size == 0 || self.size > data_len {
            return Err(Error::config(format!(
                "batch size must satisfy 1 <= d <= D = {data_len}, got d = {}",
                self.size
            )));
        }
        Ok(())
    }
}

/// Stateful minibatch source.
///
/// Under epoch-shuffle the index stream is a concatenation of random
/// permutations of `0..D`, so after `m` draws each index has appeared
/// `⌊m/D⌋` or `⌈m/D⌉` times.
#[derive(Clone, Debug)]
pub struct Batcher {
    policy: BatchPolicy,
    perm: Vec<usize>,
    cursor: usize,
    buf: Vec<usize>,
}

impl Batcher {
    pub fn new(policy: BatchPolicy, data_len: usize) -> Result<Self> {
        policy.validate(data_len)?;
        Ok(Self {
            policy,
            perm: (0..data_len).collect(),
            cursor: data_len,
            buf: Vec::with_capacity(policy.size),
        })
    }

    pub fn next_batch(&mut self, rng: &mut RandomStream) -> &[usize] {
        self.buf.clear();
        let n = self.perm.len();
        match self.policy.kind {
            BatchKind::WithReplacement => {
                for _ in 0..self.policy.size {
                    self.buf.push(rng.index(n));
                }
            }
            BatchKind::EpochShuffle => {
                while self.buf.len() < self.policy.size {
                    if self.cursor == n {
                        self.perm.shuffle(rng);
                        self.cursor = 0;
                    }
                    let take = (self.policy.size - self.buf.len()).min(n - self.cursor);
                    self.buf
                        .extend_from_slice(&self.perm[self.cursor..self.cursor + take]);
                    self.cursor += take;
                }
            }
        }
        &self.buf
    }
}

/// One-shot batch draw with a fresh [`Batcher`].
pub fn next_batch(
    policy: BatchPolicy,
    data_len: usize,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let mut b = Batcher::new(policy, data_len)?;
    Ok(b.next_batch(rng).to_vec())
}
