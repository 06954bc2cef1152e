use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Replay pool of previously generated fakes.
///
/// Below capacity every fresh item is stored and returned. At capacity a fair coin decides
/// between returning the fresh item and swapping it for a uniformly chosen stored one.
#[derive(Clone, Debug)]
pub struct HistoryBuffer<P> {
    capacity: usize,
    items: Vec<P>,
    rng: ChaCha8Rng,
}

impl<P: Clone> HistoryBuffer<P> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self::with_rng(capacity, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(capacity: usize, rng: ChaCha8Rng) -> Self {
        HistoryBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            rng,
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

    pub fn items(&self) -> &[P] {
        &self.items
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Rebuilds a buffer from saved contents.
    pub fn restore(capacity: usize, items: Vec<P>, rng: ChaCha8Rng) -> Self {
        debug_assert!(items.len() <= capacity);
        HistoryBuffer { capacity, items, rng }
    }

    pub fn sample(&mut self, fresh: P) -> P {
        self.draw(fresh).0
    }

    /// Like [`HistoryBuffer::sample`], also reporting whether the result came from storage.
    pub fn draw(&mut self, fresh: P) -> (P, bool) {
        if self.capacity == 0 {
            return (fresh, false);
        }
        if self.items.len() < self.capacity {
            self.items.push(fresh.clone());
            return (fresh, false);
        }
        if self.rng.random_bool(0.5) {
            let idx = self.rng.random_range(0..self.capacity);
            (std::mem::replace(&mut self.items[idx], fresh), true)
        } else {
            (fresh, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_phase_returns_fresh() {
        let mut b = HistoryBuffer::new(50, 1);
        assert_eq!(b.sample(7), 7);
        assert_eq!(b.len(), 1);
        for i in 0..200 {
            b.sample(i);
            assert!(b.len() <= 50);
        }
        assert_eq!(b.len(), 50);
    }

    #[test]
    fn stored_fraction_is_half() {
        let mut b = HistoryBuffer::new(50, 3);
        for i in 0..50 {
            b.sample(i);
        }
        let stored = (0..10_000).filter(|&i| b.draw(1000 + i).1).count();
        assert!((stored as f64 / 10_000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn zero_capacity_passes_through() {
        let mut b = HistoryBuffer::new(0, 0);
        assert_eq!(b.draw(4), (4, false));
        assert!(b.is_empty());
    }
}
