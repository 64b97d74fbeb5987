//! Non-stationary multi-armed bandit for meta-adapting switching parameters.
//!
//! Discounted UCB: per-arm pull mass and return sums decay by a factor
//! `lambda` on every update, so old evidence fades and the bandit keeps
//! re-checking arms whose mass has decayed below one pull. One arm is drawn
//! per actor episode and updated with that episode's return.

/// Discounted-UCB state over an ordered set of arm values.
#[derive(Debug, Clone)]
pub struct Bandit<T> {
    arms: Vec<T>,
    pull_mass: Vec<f64>,
    return_sum: Vec<f64>,
    decay: f64,
    explore_coef: f64,
}

pub const DEFAULT_DECAY: f64 = 0.99;
pub const DEFAULT_EXPLORE_COEF: f64 = 1.0;

impl<T> Bandit<T> {
    pub fn new(arms: Vec<T>) -> Self {
        Self::with_params(arms, DEFAULT_DECAY, DEFAULT_EXPLORE_COEF)
    }

    pub fn with_params(arms: Vec<T>, decay: f64, explore_coef: f64) -> Self {
        assert!(!arms.is_empty(), "bandit needs at least one arm");
        assert!(decay > 0.0 && decay <= 1.0);
        let n = arms.len();
        Self {
            arms,
            pull_mass: vec![0.0; n],
            return_sum: vec![0.0; n],
            decay,
            explore_coef,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, index: usize) -> &T {
        &self.arms[index]
    }

    /// Discounted mean return of an arm; zero before its first pull.
    pub fn discounted_mean(&self, index: usize) -> f64 {
        if self.pull_mass[index] > 0.0 {
            self.return_sum[index] / self.pull_mass[index]
        } else {
            0.0
        }
    }

    /// Picks an arm index: any arm whose decayed pull mass has fallen below
    /// one is re-initialised first (lowest index wins); otherwise the
    /// UCB score `mean + c * sqrt(2 ln(total mass) / mass)` decides, ties to
    /// the lowest index.
    pub fn sample(&self) -> usize {
        if let Some(forced) = self.pull_mass.iter().position(|&m| m < 1.0) {
            return forced;
        }
        let total: f64 = self.pull_mass.iter().sum();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.arms.len() {
            let bonus = self.explore_coef * (2.0 * total.ln() / self.pull_mass[i]).sqrt();
            let score = self.discounted_mean(i) + bonus;
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    /// Decays every arm, then credits the episode return to the pulled arm.
    pub fn update(&mut self, arm: usize, episodic_return: f64) {
        assert!(episodic_return.is_finite(), "non-finite episodic return");
        assert!(arm < self.arms.len());
        for i in 0..self.arms.len() {
            self.pull_mass[i] *= self.decay;
            self.return_sum[i] *= self.decay;
        }
        self.pull_mass[arm] += 1.0;
        self.return_sum[arm] += episodic_return;
    }
}
