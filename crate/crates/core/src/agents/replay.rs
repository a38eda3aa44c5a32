//! Experience replay: a fixed-capacity FIFO store of transitions, sampled
//! uniformly with replacement.

use std::collections::VecDeque;

use rand::Rng;

use crate::market::StateTensor;
use crate::Scalar;

/// One day of interaction, as stored for off-policy reuse.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: StateTensor,
    /// Portfolio weights played, cash first (`m + 1` entries).
    pub action: Vec<Scalar>,
    pub reward: Scalar,
    pub next_state: StateTensor,
    /// Episode ended on this transition (its target bootstraps nothing).
    pub done: bool,
}

/// FIFO replay buffer: once full, each insertion evicts the oldest item.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    /// `batch` independent uniform draws, with replacement.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(reward: Scalar) -> Transition {
        let state = StateTensor { values: Matrix::zeros(2, 3), as_of: 7 };
        Transition {
            state: state.clone(),
            action: vec![0.5, 0.5],
            reward,
            next_state: state,
            done: false,
        }
    }

    #[test]
    fn eviction_is_first_in_first_out() {
        let mut buf = ReplayBuffer::new(3);
        for r in 0..5 {
            buf.push(transition(r as Scalar));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<Scalar> = buf.items.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn fills_to_capacity_and_stops_growing() {
        let mut buf = ReplayBuffer::new(10);
        assert!(buf.is_empty());
        for r in 0..25 {
            buf.push(transition(r as Scalar));
            assert!(buf.len() <= 10);
        }
        assert_eq!(buf.len(), buf.capacity());
    }

    #[test]
    fn sampling_is_uniform_by_chi_square() {
        // 16 distinguishable items, 100k draws: the chi-square statistic
        // with 15 degrees of freedom stays below the 0.99 quantile (30.578)
        // for a uniform sampler. Seeded, so the statistic is fixed.
        let k = 16;
        let mut buf = ReplayBuffer::new(k);
        for r in 0..k {
            buf.push(transition(r as Scalar));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 100_000;
        let mut counts = vec![0usize; k];
        for t in buf.sample(draws, &mut rng) {
            counts[t.reward as usize] += 1;
        }
        let expected = draws as f64 / k as f64;
        let stat: f64 =
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(stat < 30.578, "chi-square statistic {stat} too large for uniformity");
        assert_eq!(counts.iter().sum::<usize>(), draws);
    }

    #[test]
    fn sampling_draws_with_replacement() {
        // More draws than items is legal and hits every item eventually.
        let mut buf = ReplayBuffer::new(2);
        buf.push(transition(0.0));
        buf.push(transition(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sample = buf.sample(64, &mut rng);
        assert_eq!(sample.len(), 64);
        assert!(sample.iter().any(|t| t.reward == 0.0));
        assert!(sample.iter().any(|t| t.reward == 1.0));
    }
}
