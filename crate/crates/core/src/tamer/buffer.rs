use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::feedback::FeedbackEvent;

/// Bounded FIFO store of past feedback events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    events: VecDeque<FeedbackEvent>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            events: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends, evicting the oldest event when full.
    pub fn push(&mut self, event: FeedbackEvent) {
        if self.events.len() == self.capacity {
            self.events.pop_front();
        }
        self.events.push_back(event);
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.events.iter()
    }

    /// `k` events drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, k: usize, rng: &mut R) -> Vec<&'a FeedbackEvent> {
        if self.events.is_empty() {
            return Vec::new();
        }
        (0..k)
            .map(|_| &self.events[rng.gen_range(0..self.events.len())])
            .collect()
    }
}
