//! Fixed-capacity FIFO experience buffers with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    buf: VecDeque<T>,
    capacity: usize,
    pushed: u64,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            pushed: 0,
        }
    }

    /// Insert, evicting the oldest element when full.
    pub fn push(&mut self, item: T) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(item);
        self.pushed += 1;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes over the buffer's lifetime.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.buf.iter()
    }

    /// `n` uniform draws with replacement. Errors on an empty buffer.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<T>> {
        if self.buf.is_empty() {
            return Err(CoreError::EmptyInput("replay buffer"));
        }
        Ok((0..n)
            .map(|_| self.buf[rng.random_range(0..self.buf.len())].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        b.push('a');
        b.push('b');
        b.push('c');
        let contents: Vec<char> = b.iter().copied().collect();
        assert_eq!(contents, vec!['b', 'c']);
    }

    #[test]
    fn singleton_sampling() {
        let mut b = ReplayBuffer::new(4);
        b.push(42);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(b.sample(1, &mut rng).unwrap(), vec![42]);
        assert_eq!(b.sample(5, &mut rng).unwrap(), vec![42; 5]);
    }

    #[test]
    fn size_capped_under_many_pushes() {
        let mut b = ReplayBuffer::new(1000);
        for i in 0..10_000 {
            b.push(i);
        }
        assert_eq!(b.len(), 1000);
        assert_eq!(b.total_pushed(), 10_000);
        assert_eq!(*b.iter().next().unwrap(), 9000);
    }

    #[test]
    fn empty_sample_is_error_and_zero_draw_is_empty() {
        let b: ReplayBuffer<u8> = ReplayBuffer::new(3);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(b.sample(1, &mut rng).is_err());

        let mut b2 = ReplayBuffer::new(3);
        b2.push(1u8);
        assert!(b2.sample(0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        // Chi-square over 10 bins at 100k draws; χ²₉ at p = 0.01 is 21.666.
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(i);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(12345);
        let draws = b.sample(100_000, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        for d in draws {
            counts[d] += 1;
        }
        let expected = 10_000.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }
}
