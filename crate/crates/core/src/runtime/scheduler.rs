use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AclMessage;
use crate::services::InvocationOutcome;

/// Something waiting for its delivery tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Pending {
    Message(AclMessage),
    ServiceReply(InvocationOutcome),
}

/// Seeded event queue ordered by (tick, jitter, sequence number). Jitter is
/// drawn when an item is enqueued, so items due at the same tick come out in
/// a seed-determined order.
#[derive(Debug, Clone)]
pub struct Scheduler {
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u32, u64), Pending>,
}

impl Scheduler {
    pub fn new(seed: u64) -> Self {
        Scheduler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance(&mut self) -> u64 {
        self.now += 1;
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn schedule(&mut self, at: u64, item: Pending) {
        let jitter = self.rng.gen::<u32>();
        self.seq += 1;
        self.queue.insert((at, jitter, self.seq), item);
    }

    /// Removes and returns the first item due by now.
    pub fn pop_ready(&mut self) -> Option<Pending> {
        let (&key, _) = self.queue.first_key_value()?;
        if key.0 > self.now {
            return None;
        }
        self.queue.remove(&key)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn pending(&self) -> impl Iterator<Item = &Pending> {
        self.queue.values()
    }
}
