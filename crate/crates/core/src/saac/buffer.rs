use rand::Rng;

use crate::pathtrack::{Control, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: VehicleState,
    pub control: Control,
    pub dist: f64,
    pub cost: f64,
    pub next: VehicleState,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            head: 0,
        }
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

    /// Inserts, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// `n` draws with replacement from the filled region.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }

    /// Entries from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.head };
        self.items[split..].iter().chain(self.items[..split].iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(i: usize) -> Transition {
        let s = VehicleState::nominal(i as f64);
        Transition {
            state: s,
            control: Control::default(),
            dist: 0.0,
            cost: i as f64,
            next: s,
        }
    }

    #[test]
    fn keeps_only_the_latest() {
        let mut b = ReplayBuffer::new(5);
        for i in 0..12 {
            b.push(tr(i));
            assert!(b.len() <= 5);
        }
        let costs: Vec<f64> = b.iter_ordered().map(|t| t.cost).collect();
        assert_eq!(costs, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(100, &mut rng).iter().all(|t| t.cost >= 7.0));
    }

    #[test]
    fn samples_only_filled_region() {
        let mut b = ReplayBuffer::new(100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(3, &mut rng).is_empty());
        b.push(tr(1));
        b.push(tr(2));
        assert!(b.sample(50, &mut rng).iter().all(|t| t.cost == 1.0 || t.cost == 2.0));
    }
}
