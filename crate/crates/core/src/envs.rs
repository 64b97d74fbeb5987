//! Small deterministic hard-exploration environments.
//!
//! Both environments have two actions and analytically known optimal returns,
//! which makes score normalisation exact:
//!
//! - **DeepSea(N)**: an N-by-N grid. The agent starts top-left and descends one
//!   row per step. Action 1 ("right") moves one column right at a cost of
//!   `0.01/N`; action 0 ("left") moves one column left for free. A bonus of +1
//!   is paid on the final step if and only if the agent is at the rightmost
//!   column and moves right again — i.e. the single all-right action sequence.
//!   Every episode lasts exactly N steps. Optimal return: 0.99.
//! - **DistractorChain(N)**: positions 0..N-1 on a line, starting at 1.
//!   Reaching position 0 pays 0.1 and terminates (the distractor, one step from
//!   the start); reaching N-1 pays 1.0 and terminates. Episodes time out after
//!   4N steps with reward 0. Optimal return: 1.0.

use thiserror::Error;

/// Environment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    DeepSea,
    DistractorChain,
}

/// Environment family plus size; the episode step limit is derived from both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub size: u32,
    pub step_limit: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("environment size {0} too small: DeepSea needs N >= 2")]
    DeepSeaTooSmall(u32),
    #[error(
        "environment size {0} too small: DistractorChain needs N >= 3 so the start is not terminal"
    )]
    ChainTooSmall(u32),
}

impl EnvSpec {
    /// Builds a spec with the standard step limit (DeepSea: N, chain: 4N).
    pub fn new(kind: EnvKind, size: u32) -> Result<Self, EnvError> {
        match kind {
            EnvKind::DeepSea if size < 2 => return Err(EnvError::DeepSeaTooSmall(size)),
            EnvKind::DistractorChain if size < 3 => return Err(EnvError::ChainTooSmall(size)),
            _ => {}
        }
        let step_limit = match kind {
            EnvKind::DeepSea => size,
            EnvKind::DistractorChain => 4 * size,
        };
        Ok(Self {
            kind,
            size,
            step_limit,
        })
    }

    /// Number of distinct non-terminal observations, for table sizing.
    pub fn num_states(&self) -> usize {
        match self.kind {
            EnvKind::DeepSea => (self.size as usize) * (self.size as usize),
            EnvKind::DistractorChain => self.size as usize,
        }
    }

    pub fn num_actions(&self) -> usize {
        2
    }
}

/// Best achievable undiscounted episode return.
pub fn optimal_return(spec: &EnvSpec) -> f64 {
    match spec.kind {
        EnvKind::DeepSea => 0.99,
        EnvKind::DistractorChain => 1.0,
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
}

/// A live environment instance: spec plus current state.
///
/// Both dynamics are fully deterministic; `seed` is accepted for interface
/// uniformity and reproducibility bookkeeping but does not influence
/// transitions. Identical `(spec, seed, action sequence)` always produces an
/// identical trajectory.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    row: u32,
    col: u32,
    pos: u32,
    steps_elapsed: u32,
    terminal: bool,
}

impl Env {
    /// Resets to the defined start state: DeepSea (0,0), chain position 1.
    pub fn reset(spec: EnvSpec, _seed: u64) -> Self {
        Self {
            spec,
            row: 0,
            col: 0,
            pos: 1,
            steps_elapsed: 0,
            terminal: false,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn steps_elapsed(&self) -> u32 {
        self.steps_elapsed
    }

    /// Dense id of the current state, valid while not terminal.
    pub fn state_id(&self) -> usize {
        debug_assert!(!self.terminal, "state_id queried on terminal state");
        match self.spec.kind {
            EnvKind::DeepSea => (self.row as usize) * (self.spec.size as usize) + self.col as usize,
            EnvKind::DistractorChain => self.pos as usize,
        }
    }

    /// Takes one action (0 or 1). Panics if called on a terminal state.
    pub fn step(&mut self, action: usize) -> StepOutcome {
        assert!(!self.terminal, "step called on terminal environment");
        assert!(action < 2, "invalid action {action}");
        self.steps_elapsed += 1;
        match self.spec.kind {
            EnvKind::DeepSea => self.step_deep_sea(action),
            EnvKind::DistractorChain => self.step_chain(action),
        }
    }

    fn step_deep_sea(&mut self, action: usize) -> StepOutcome {
        let n = self.spec.size;
        let mut reward = 0.0;
        // Treasure requires being at the rightmost column on the bottom row and
        // still moving right, i.e. the all-right action sequence.
        if action == 1 {
            if self.row == n - 1 && self.col == n - 1 {
                reward += 1.0;
            }
            reward -= 0.01 / n as f64;
            self.col = (self.col + 1).min(n - 1);
        } else {
            self.col = self.col.saturating_sub(1);
        }
        self.row += 1;
        self.terminal = self.row == n;
        StepOutcome {
            reward,
            terminal: self.terminal,
        }
    }

    fn step_chain(&mut self, action: usize) -> StepOutcome {
        let n = self.spec.size;
        if action == 1 {
            self.pos += 1;
        } else {
            self.pos -= 1;
        }
        let reward;
        if self.pos == 0 {
            reward = 0.1;
            self.terminal = true;
        } else if self.pos == n - 1 {
            reward = 1.0;
            self.terminal = true;
        } else if self.steps_elapsed >= self.spec.step_limit {
            reward = 0.0;
            self.terminal = true;
        } else {
            reward = 0.0;
        }
        StepOutcome {
            reward,
            terminal: self.terminal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn run_episode(spec: EnvSpec, actions: &[usize]) -> (f64, u32) {
        let mut env = Env::reset(spec, 0);
        let mut total = 0.0;
        for &a in actions {
            let out = env.step(a);
            total += out.reward;
            if out.terminal {
                break;
            }
        }
        (total, env.steps_elapsed())
    }

    #[test]
    fn deep_sea_starts_top_left() {
        let spec = EnvSpec::new(EnvKind::DeepSea, 4).unwrap();
        let env = Env::reset(spec, 0);
        assert_eq!(env.state_id(), 0);
    }

    #[test]
    fn chain_starts_at_position_one() {
        let spec = EnvSpec::new(EnvKind::DistractorChain, 10).unwrap();
        let env = Env::reset(spec, 7);
        assert_eq!(env.state_id(), 1);
    }

    #[test]
    fn reset_is_deterministic() {
        let spec = EnvSpec::new(EnvKind::DeepSea, 6).unwrap();
        let a = Env::reset(spec, 3);
        let b = Env::reset(spec, 3);
        assert_eq!(a.state_id(), b.state_id());
        assert_eq!(a.steps_elapsed(), b.steps_elapsed());
    }

    #[test]
    fn deep_sea_all_right_earns_treasure_minus_costs() {
        let spec = EnvSpec::new(EnvKind::DeepSea, 2).unwrap();
        let (ret, len) = run_episode(spec, &[1, 1]);
        assert_abs_diff_eq!(ret, 1.0 - 2.0 * 0.005, epsilon = 1e-12);
        assert_eq!(len, 2);
    }

    #[test]
    fn deep_sea_all_left_earns_nothing() {
        let spec = EnvSpec::new(EnvKind::DeepSea, 2).unwrap();
        let (ret, _) = run_episode(spec, &[0, 0]);
        assert_eq!(ret, 0.0);
    }

    #[test]
    fn deep_sea_near_miss_gets_no_bonus() {
        // Left first then all right ends at the rightmost column but never
        // satisfies the treasure condition.
        let spec = EnvSpec::new(EnvKind::DeepSea, 3).unwrap();
        let (ret, _) = run_episode(spec, &[0, 1, 1]);
        assert!(ret < 0.0);
    }

    #[test]
    fn chain_left_from_start_hits_distractor() {
        let spec = EnvSpec::new(EnvKind::DistractorChain, 10).unwrap();
        let mut env = Env::reset(spec, 0);
        let out = env.step(0);
        assert_abs_diff_eq!(out.reward, 0.1, epsilon = 1e-15);
        assert!(out.terminal);
    }

    #[test]
    fn chain_all_right_reaches_goal() {
        let spec = EnvSpec::new(EnvKind::DistractorChain, 5).unwrap();
        let (ret, len) = run_episode(spec, &[1; 20]);
        assert_abs_diff_eq!(ret, 1.0, epsilon = 1e-15);
        assert_eq!(len, 3);
    }

    #[test]
    fn chain_times_out_with_zero_reward() {
        let spec = EnvSpec::new(EnvKind::DistractorChain, 4).unwrap();
        // Oscillate between 1 and 2 forever.
        let actions: Vec<usize> = (0..40).map(|i| (i + 1) % 2).collect();
        let mut env = Env::reset(spec, 0);
        let mut total = 0.0;
        let mut steps = 0;
        for &a in &actions {
            let out = env.step(a);
            total += out.reward;
            steps += 1;
            if out.terminal {
                break;
            }
        }
        assert_eq!(steps, spec.step_limit);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn optimal_returns_are_pinned() {
        assert_eq!(
            optimal_return(&EnvSpec::new(EnvKind::DeepSea, 10).unwrap()),
            0.99
        );
        assert_eq!(
            optimal_return(&EnvSpec::new(EnvKind::DeepSea, 2).unwrap()),
            0.99
        );
        assert_eq!(
            optimal_return(&EnvSpec::new(EnvKind::DistractorChain, 6).unwrap()),
            1.0
        );
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(EnvSpec::new(EnvKind::DeepSea, 1).is_err());
        assert!(EnvSpec::new(EnvKind::DistractorChain, 2).is_err());
    }

    #[test]
    #[should_panic(expected = "terminal")]
    fn stepping_a_terminal_env_panics() {
        let spec = EnvSpec::new(EnvKind::DistractorChain, 10).unwrap();
        let mut env = Env::reset(spec, 0);
        env.step(0);
        env.step(0);
    }

    #[test]
    fn deep_sea_episode_length_is_exactly_n_and_returns_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [2u32, 3, 5, 10] {
            let spec = EnvSpec::new(EnvKind::DeepSea, n).unwrap();
            for _ in 0..50 {
                let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let (ret, len) = run_episode(spec, &actions);
                assert_eq!(len, n);
                assert!((-0.01..=0.99).contains(&ret), "return {ret} out of range");
            }
        }
    }

    #[test]
    fn chain_returns_take_known_values() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let spec = EnvSpec::new(EnvKind::DistractorChain, 8).unwrap();
        for _ in 0..200 {
            let actions: Vec<usize> = (0..spec.step_limit).map(|_| rng.gen_range(0..2)).collect();
            let (ret, _) = run_episode(spec, &actions);
            assert!(
                ret == 0.0 || ret == 0.1 || ret == 1.0,
                "unexpected chain return {ret}"
            );
        }
    }
}
