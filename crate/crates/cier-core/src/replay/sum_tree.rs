//! Priority sum tree: O(log n) updates and proportional prefix-sum sampling.

use rand::Rng;

/// Complete binary tree over a power-of-two leaf array; every internal node
/// holds the sum of its children, so the root is the total priority mass.
///
/// Parents are recomputed from both children on every update (rather than
/// accumulating deltas), which keeps the root equal to the leaf sum to within
/// pairwise-summation round-off regardless of the update history.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// Creates a tree with at least `capacity` leaves (rounded up to a power
    /// of two), all zero.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total priority mass (the root).
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn priority(&self, index: usize) -> f64 {
        self.nodes[self.capacity + index]
    }

    /// Sets the priority at `index`. Priorities must be finite and >= 0.
    pub fn update(&mut self, index: usize, priority: f64) {
        assert!(index < self.capacity, "leaf {index} out of range");
        assert!(priority.is_finite() && priority >= 0.0, "bad priority {priority}");
        let mut node = self.capacity + index;
        self.nodes[node] = priority;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Replaces the first `priorities.len()` leaves and zeroes the rest, then
    /// rebuilds all internal sums in one O(capacity) pass.
    pub fn rebuild(&mut self, priorities: &[f64]) {
        assert!(priorities.len() <= self.capacity);
        for (i, node) in self.nodes[self.capacity..].iter_mut().enumerate() {
            let p = priorities.get(i).copied().unwrap_or(0.0);
            debug_assert!(p.is_finite() && p >= 0.0);
            *node = p;
        }
        for node in (1..self.capacity).rev() {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Finds the leaf whose cumulative-priority interval contains `mass`,
    /// i.e. leaf `i` is returned with probability `priority(i) / total()`
    /// for `mass` uniform on `[0, total)`.
    pub fn find(&self, mass: f64) -> usize {
        let total = self.total();
        assert!(total > 0.0, "cannot sample from an empty tree");
        let mut mass = mass.clamp(0.0, total);
        let mut node = 1;
        while node < self.capacity {
            let left = 2 * node;
            if mass < self.nodes[left] {
                node = left;
            } else {
                mass -= self.nodes[left];
                node = left + 1;
            }
        }
        let mut index = node - self.capacity;
        // Round-off at segment boundaries can land on a zero-priority leaf;
        // walk back to the nearest live one.
        if self.nodes[node] == 0.0 {
            while index > 0 && self.priority(index) == 0.0 {
                index -= 1;
            }
            while self.priority(index) == 0.0 && index + 1 < self.capacity {
                index += 1;
            }
        }
        index
    }

    /// Stratified proportional sampling: the total mass is split into `batch`
    /// equal segments and one uniform draw is taken from each, so the
    /// marginal distribution of every slot is still proportional.
    pub fn sample_stratified<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        let total = self.total();
        let seg = total / batch as f64;
        (0..batch)
            .map(|j| {
                let lo = seg * j as f64;
                let mass = lo + rng.random::<f64>() * seg;
                self.find(mass)
            })
            .collect()
    }

    /// Signed difference between the root and a sequential leaf sum; bounded
    /// by round-off, checked by the acceptance suite.
    pub fn root_drift(&self) -> f64 {
        let leaf_sum: f64 = self.nodes[self.capacity..].iter().sum();
        self.total() - leaf_sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_is_leaf_sum() {
        let mut t = SumTree::new(8);
        for i in 0..8 {
            t.update(i, i as f64);
        }
        assert_eq!(t.total(), 28.0);
    }

    #[test]
    fn update_changes_root_by_delta() {
        let mut t = SumTree::new(2);
        t.update(0, 1.0);
        t.update(1, 3.0);
        let before = t.total();
        t.update(1, 2.0);
        assert_eq!(t.total() - before, -1.0);
    }

    #[test]
    fn find_respects_cumulative_intervals() {
        let mut t = SumTree::new(4);
        t.update(0, 1.0);
        t.update(1, 3.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(3.999), 1);
    }

    #[test]
    fn two_leaf_frequencies_within_one_percent() {
        let mut t = SumTree::new(2);
        t.update(0, 1.0);
        t.update(1, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut counts = [0u64; 2];
        for _ in 0..draws {
            counts[t.find(rng.random::<f64>() * t.total())] += 1;
        }
        let f0 = counts[0] as f64 / draws as f64;
        assert!((f0 - 0.25).abs() < 0.01, "f0 = {f0}");
    }

    #[test]
    fn stratified_marginals_proportional() {
        let mut t = SumTree::new(4);
        for (i, p) in [4.0, 1.0, 2.0, 1.0].iter().enumerate() {
            t.update(i, *p);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u64; 4];
        for _ in 0..25_000 {
            for ix in t.sample_stratified(4, &mut rng) {
                counts[ix] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        for (i, expect) in [0.5, 0.125, 0.25, 0.125].iter().enumerate() {
            let f = counts[i] as f64 / total as f64;
            assert!((f - expect).abs() < 0.01, "leaf {i}: {f} vs {expect}");
        }
    }

    #[test]
    fn rebuild_matches_pointwise_updates() {
        let ps: Vec<f64> = (0..13).map(|i| (i % 5) as f64 + 0.5).collect();
        let mut a = SumTree::new(13);
        let mut b = SumTree::new(13);
        for (i, p) in ps.iter().enumerate() {
            a.update(i, *p);
        }
        b.rebuild(&ps);
        assert_eq!(a.total(), b.total());
        for i in 0..13 {
            assert_eq!(a.priority(i), b.priority(i));
        }
    }
}
