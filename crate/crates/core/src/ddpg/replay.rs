use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::ErrorState;
use crate::{Error, Result};

/// One experience record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: ErrorState,
    pub next_state: ErrorState,
    /// Control input taken in `state`, m/s².
    pub action: f64,
    pub reward: f64,
    /// True only when the divergence guard ended the episode; the natural
    /// step-budget horizon is stored as non-terminal truncation.
    pub terminal: bool,
}

impl Transition {
    pub fn validate(&self, u_max: f64) -> Result<()> {
        if !self.state.is_finite()
            || !self.next_state.is_finite()
            || !self.action.is_finite()
            || !self.reward.is_finite()
        {
            return Err(Error::NumericDomain("transition holds non-finite values".into()));
        }
        if self.action.abs() > u_max + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "action {} exceeds the control bound {u_max}",
                self.action
            )));
        }
        Ok(())
    }
}

/// Bounded FIFO of transitions with a uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 20)), capacity, write: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, evicting the oldest record once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write] = t;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    /// Draw `n` records uniformly at random with replacement.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        debug_assert!(!self.items.is_empty());
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.items[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn transition(tag: f64) -> Transition {
        Transition {
            state: ErrorState::new(tag, 0.0, 0.0, 0.0),
            next_state: ErrorState::zero(),
            action: 0.0,
            reward: -tag,
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.len(), 3);
        // Oldest two evicted: remaining tags are 2, 3, 4 (in ring order).
        let tags: Vec<f64> = (0..3).map(|i| buf.get(i).state.e_p).collect();
        assert!(tags.contains(&2.0) && tags.contains(&3.0) && tags.contains(&4.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(transition(i as f64));
        }
        let a = buf.sample_indices(&mut stream(5, 0, 0, Purpose::Replay), 64);
        let b = buf.sample_indices(&mut stream(5, 0, 0, Purpose::Replay), 64);
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        // Chi-squared-style sanity check: per-item frequency stays within 5%
        // of uniform over many draws.
        let n = 50;
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.push(transition(i as f64));
        }
        let mut counts = vec![0usize; n];
        let mut rng = stream(7, 0, 0, Purpose::Replay);
        let draws = 2_000_000;
        for idx in buf.sample_indices(&mut rng, draws) {
            counts[idx] += 1;
        }
        let expected = draws as f64 / n as f64;
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - expected).abs() / expected;
            assert!(dev < 0.05, "item {i} frequency off by {:.2}%", dev * 100.0);
        }
    }

    #[test]
    fn transition_validation() {
        let mut t = transition(1.0);
        assert!(t.validate(2.5).is_ok());
        t.action = 3.0;
        assert!(t.validate(2.5).is_err());
        t.action = f64::NAN;
        assert!(t.validate(2.5).is_err());
    }
}
