use rand::Rng;

use super::AgentError;
use crate::plant::NUM_ACTIONS;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn new(
        obs: Vec<f64>,
        action: usize,
        reward: f64,
        next_obs: Vec<f64>,
        done: bool,
    ) -> Result<Self, AgentError> {
        if action >= NUM_ACTIONS {
            return Err(AgentError::Transition(format!("action {action} out of range")));
        }
        if !reward.is_finite() {
            return Err(AgentError::Transition(format!("reward {reward} is not finite")));
        }
        if obs.len() != next_obs.len() {
            return Err(AgentError::Transition(format!(
                "observation lengths differ ({} vs {})",
                obs.len(),
                next_obs.len()
            )));
        }
        Ok(Self {
            obs,
            action,
            reward,
            next_obs,
            done,
        })
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    // Slot the next insertion overwrites once the ring is full.
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total insertions, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// Uniform draw of `n` storage indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>, AgentError> {
        if self.items.len() < n {
            return Err(AgentError::BatchSize {
                expected: n,
                got: self.items.len(),
            });
        }
        Ok(self
            .sample_indices(n, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(i: usize) -> Transition {
        Transition::new(vec![i as f64], i % NUM_ACTIONS, -(i as f64), vec![0.0], false).unwrap()
    }

    #[test]
    fn fifo_eviction_keeps_latest() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..12 {
            buf.push(tagged(i));
            assert!(buf.len() <= 5);
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.obs[0]).collect();
        assert_eq!(kept, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(buf.inserted(), 12);
    }

    #[test]
    fn sample_is_seeded_and_in_range() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..40 {
            buf.push(tagged(i));
        }
        let a = buf.sample_indices(16, &mut ChaCha8Rng::seed_from_u64(4));
        let b = buf.sample_indices(16, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < 40));
    }

    #[test]
    fn undersized_buffer_cannot_fill_batch() {
        let mut buf = ReplayBuffer::new(100);
        buf.push(tagged(0));
        assert!(buf.sample(16, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn transition_validation() {
        assert!(Transition::new(vec![0.0], 9, 0.0, vec![0.0], false).is_err());
        assert!(Transition::new(vec![0.0], 0, f64::NAN, vec![0.0], false).is_err());
        assert!(Transition::new(vec![0.0], 0, 0.0, vec![0.0, 1.0], false).is_err());
    }
}
