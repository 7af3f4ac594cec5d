//! Experience replay: a fixed-capacity ring of transitions with uniform
//! sampling (with replacement).

use rand::Rng;

use crate::nn::QlearnError;
use crate::rng::SimRng;

/// One learner experience. `terminal` holds exactly when `next_state` is
/// absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<Vec<f64>>,
    pub terminal: bool,
}

impl Transition {
    /// Non-terminal step with a successor state.
    pub fn step(state: Vec<f64>, action: usize, reward: f64, next_state: Vec<f64>) -> Transition {
        Transition { state, action, reward, next_state: Some(next_state), terminal: false }
    }

    /// Terminal step; no successor exists.
    pub fn terminal(state: Vec<f64>, action: usize, reward: f64) -> Transition {
        Transition { state, action, reward, next_state: None, terminal: true }
    }
}

/// FIFO ring buffer: once full, each push evicts the oldest element.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay buffer needs positive capacity");
        ReplayBuffer { items: Vec::new(), capacity, cursor: 0 }
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

    pub fn push(&mut self, t: Transition) {
        debug_assert_eq!(t.terminal, t.next_state.is_none());
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Transitions in insertion order, oldest first.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let (tail, head) = self.items.split_at(self.cursor.min(self.items.len()));
        head.iter().chain(tail.iter())
    }

    /// `k` independent uniform draws over the current contents.
    pub fn sample(&self, k: usize, rng: &mut SimRng) -> Result<Vec<&Transition>, QlearnError> {
        if self.items.len() < k {
            return Err(QlearnError::BufferTooSmall { want: k, have: self.items.len() });
        }
        Ok((0..k).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn t(tag: f64) -> Transition {
        Transition::terminal(vec![tag], 0, tag)
    }

    #[test]
    fn fifo_eviction_drops_the_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..4 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let order: Vec<f64> = buf.iter_fifo().map(|x| x.reward).collect();
        assert_eq!(order, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn contents_are_the_last_min_p_cap_pushes_in_order() {
        let cap = 7;
        for pushes in [1usize, 5, 7, 8, 20, 23] {
            let mut buf = ReplayBuffer::new(cap);
            for i in 0..pushes {
                buf.push(t(i as f64));
            }
            let got: Vec<f64> = buf.iter_fifo().map(|x| x.reward).collect();
            let start = pushes.saturating_sub(cap);
            let expect: Vec<f64> = (start..pushes).map(|i| i as f64).collect();
            assert_eq!(got, expect, "after {pushes} pushes");
        }
    }

    #[test]
    fn sampling_requires_enough_entries() {
        let mut buf = ReplayBuffer::new(10);
        buf.push(t(0.0));
        assert!(matches!(
            buf.sample(2, &mut rng_from_seed(0)),
            Err(QlearnError::BufferTooSmall { want: 2, have: 1 })
        ));
    }

    #[test]
    fn sampling_is_uniform() {
        // Chi-square over 10^4 draws from a 5-element buffer; 4 degrees of
        // freedom, 0.999 quantile ~ 18.47.
        let mut buf = ReplayBuffer::new(5);
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        let mut rng = rng_from_seed(17);
        let mut counts = [0usize; 5];
        let draws = 10_000;
        for _ in 0..draws / 5 {
            for tr in buf.sample(5, &mut rng).unwrap() {
                counts[tr.reward as usize] += 1;
            }
        }
        let expected = draws as f64 / 5.0;
        let chi2: f64 =
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 18.47, "chi-square {chi2}, counts {counts:?}");
    }

    #[test]
    fn sampling_is_deterministic_under_a_fixed_seed() {
        let mut buf = ReplayBuffer::new(8);
        for i in 0..8 {
            buf.push(t(i as f64));
        }
        let s1: Vec<f64> = buf.sample(4, &mut rng_from_seed(3)).unwrap().iter().map(|t| t.reward).collect();
        let s2: Vec<f64> = buf.sample(4, &mut rng_from_seed(3)).unwrap().iter().map(|t| t.reward).collect();
        assert_eq!(s1, s2);
    }

    #[test]
    fn size_never_exceeds_capacity() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..100 {
            buf.push(t(i as f64));
            assert!(buf.len() <= 4);
        }
    }
}
