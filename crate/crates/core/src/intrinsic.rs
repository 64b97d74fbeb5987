//! Count-based novelty reward for the intrinsic explore mode.

use std::collections::HashMap;

/// Per-state visit counts. Absent states count as zero.
#[derive(Debug, Clone, Default)]
pub struct VisitCounts {
    counts: HashMap<usize, u64>,
}

impl VisitCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, state: usize) {
        *self.counts.entry(state).or_insert(0) += 1;
    }

    pub fn count(&self, state: usize) -> u64 {
        self.counts.get(&state).copied().unwrap_or(0)
    }

    /// Novelty bonus `1/sqrt(max(count, 1))`, in (0, 1].
    pub fn novelty_reward(&self, state: usize) -> f64 {
        1.0 / (self.count(state).max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observe_increments_one_state_only() {
        let mut c = VisitCounts::new();
        c.observe(3);
        assert_eq!(c.count(3), 1);
        c.observe(3);
        assert_eq!(c.count(3), 2);
        assert_eq!(c.count(4), 0);
    }

    #[test]
    fn novelty_follows_inverse_sqrt() {
        let mut c = VisitCounts::new();
        assert_eq!(c.novelty_reward(0), 1.0);
        c.observe(0);
        assert_eq!(c.novelty_reward(0), 1.0);
        for _ in 0..3 {
            c.observe(0);
        }
        assert_eq!(c.novelty_reward(0), 0.5);
    }

    #[test]
    fn novelty_is_nonincreasing_and_bounded() {
        let mut c = VisitCounts::new();
        let mut prev = c.novelty_reward(1);
        for _ in 0..100 {
            c.observe(1);
            let r = c.novelty_reward(1);
            assert!(r <= prev && r > 0.0 && r <= 1.0);
            prev = r;
        }
    }

    #[test]
    fn uniform_coverage_gives_uniform_rewards() {
        let mut c = VisitCounts::new();
        for _ in 0..9 {
            for s in 0..5 {
                c.observe(s);
            }
        }
        for s in 0..5 {
            assert_eq!(c.novelty_reward(s), 1.0 / 3.0);
        }
    }
}
