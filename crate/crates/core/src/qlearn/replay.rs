//! Experience replay with constraint costs.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::ActionMask;
use crate::lagrangian::CostSample;

/// Shared observation storage. Consecutive transitions reference the same
/// allocation for `next_obs`/`obs`, and quasi-static episodes collapse to a
/// single buffer, which keeps large replay histories cheap.
pub type Obs = Arc<[f64]>;

/// One stored step, including every constraint cost needed to rebuild the
/// penalty under the duals that are current at sampling time.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Obs,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Obs,
    pub costs: CostSample,
    /// Safe actions at the next state, used to mask the bootstrap max.
    pub next_mask: ActionMask,
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring with uniform minibatch sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            ring: VecDeque::with_capacity(capacity.min(1 << 20)),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, evicting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(t);
    }

    /// Uniform sample of `batch` distinct indices (without replacement within
    /// the batch). `batch` must not exceed the current size.
    pub fn sample(&mut self, batch: usize) -> Vec<&Transition> {
        let n = self.ring.len();
        assert!(batch <= n, "batch {batch} exceeds buffer size {n}");
        // partial Fisher-Yates over an index table
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..batch {
            let j = self.rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(batch);
        idx.into_iter().map(|i| &self.ring[i]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.ring.iter()
    }
}
