//! Experience replay: a bounded ring of transitions with uniform
//! without-replacement batch sampling.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: Vec<Transition>,
    capacity: usize,
    write_pos: usize,
    total_inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be > 0");
        ReplayMemory { buffer: Vec::new(), capacity, write_pos: 0, total_inserted: 0 }
    }

    /// Insert a transition, evicting the oldest once full.
    pub fn push(&mut self, transition: Transition) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(transition);
        } else {
            self.buffer[self.write_pos] = transition;
        }
        self.write_pos = (self.write_pos + 1) % self.capacity;
        self.total_inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.total_inserted
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.buffer[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// `k` distinct indices drawn uniformly (Floyd's algorithm, O(k)).
    pub fn sample_indices(&self, rng: &mut ChaCha12Rng, k: usize) -> Vec<usize> {
        let n = self.buffer.len();
        assert!(k <= n, "batch {k} larger than memory {n}");
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for j in (n - k)..n {
            let t = rng.random_range(0..=j);
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        chosen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn transition(tag: f64) -> Transition {
        Transition { state: vec![tag], action: 0, reward: tag, next_state: vec![tag], done: false }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut mem = ReplayMemory::new(3);
        for i in 0..5 {
            mem.push(transition(i as f64));
        }
        assert_eq!(mem.len(), 3);
        assert_eq!(mem.total_inserted(), 5);
        let mut rewards: Vec<f64> = mem.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        // Insertions 0 and 1 were evicted; 2, 3, 4 remain.
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sample_is_distinct_and_in_bounds() {
        let mut mem = ReplayMemory::new(100);
        for i in 0..50 {
            mem.push(transition(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let idx = mem.sample_indices(&mut rng, 16);
            assert_eq!(idx.len(), 16);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 16, "duplicate index in batch");
            assert!(idx.iter().all(|i| *i < 50));
        }
    }

    #[test]
    fn sampling_is_close_to_uniform() {
        let mut mem = ReplayMemory::new(64);
        for i in 0..64 {
            mem.push(transition(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut counts = [0u64; 64];
        let draws = 4000;
        for _ in 0..draws {
            for i in mem.sample_indices(&mut rng, 8) {
                counts[i] += 1;
            }
        }
        let expected = (draws * 8) as f64 / 64.0;
        let chi2: f64 = counts
            .iter()
            .map(|c| {
                let d = *c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 63 degrees of freedom; chi-square critical value at p = 0.01.
        assert!(chi2 < 92.01, "chi2 = {chi2}");
    }
}
