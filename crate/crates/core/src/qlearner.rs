//! Multi-head tabular n-step Q-learning.
//!
//! A [`QTable`] holds one or more extrinsic heads (an ensemble, used by the
//! uncertainty-based switching triggers) and optionally one intrinsic head
//! trained on novelty reward. Updates are online k-step targets from a rolling
//! buffer ([`NStepUpdater`]); there is no replay, recurrence, or function
//! approximation. With `watkins_cut` enabled the return is truncated at the
//! first non-greedy action after the head of the window, bootstrapping at that
//! state, separately for each head against its own greedy policy.

use std::io::Write;
use std::path::Path;

use rand::Rng;

/// Learner hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// n-step horizon.
    pub k: usize,
    /// Discount factor in (0, 1].
    pub gamma: f64,
    /// Learning rate in (0, 1].
    pub alpha: f64,
    /// Truncate returns at non-greedy actions.
    pub watkins_cut: bool,
    /// Number of extrinsic heads; at least 2 when ensemble triggers are used.
    pub ensemble_size: usize,
    /// Add one intrinsic head trained on the novelty reward stream.
    pub intrinsic_enabled: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k: 5,
            gamma: 0.997,
            alpha: 0.02,
            watkins_cut: false,
            ensemble_size: 1,
            intrinsic_enabled: false,
        }
    }
}

/// Tabular action-value estimates, one dense table per head.
///
/// Heads `0..ensemble_size` are extrinsic; the intrinsic head, when present,
/// is the last one. All entries default to zero; ensemble heads beyond the
/// first are usually perturbed at construction (see [`QTable::perturb_head`])
/// so that identical update streams can still diverge.
#[derive(Debug, Clone)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    heads: Vec<Vec<f64>>,
    intrinsic_head: Option<usize>,
}

impl QTable {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        ensemble_size: usize,
        intrinsic: bool,
    ) -> Self {
        assert!(ensemble_size >= 1, "need at least one extrinsic head");
        assert!(num_actions >= 1);
        let head_count = ensemble_size + usize::from(intrinsic);
        Self {
            num_states,
            num_actions,
            heads: vec![vec![0.0; num_states * num_actions]; head_count],
            intrinsic_head: intrinsic.then_some(ensemble_size),
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Index of the intrinsic head, if configured.
    pub fn intrinsic_head(&self) -> Option<usize> {
        self.intrinsic_head
    }

    /// Extrinsic head indices.
    pub fn extrinsic_heads(&self) -> std::ops::Range<usize> {
        0..(self.heads.len() - usize::from(self.intrinsic_head.is_some()))
    }

    fn idx(&self, state: usize, action: usize) -> usize {
        debug_assert!(state < self.num_states, "state {state} out of range");
        debug_assert!(action < self.num_actions);
        state * self.num_actions + action
    }

    pub fn value(&self, head: usize, state: usize, action: usize) -> f64 {
        self.heads[head][self.idx(state, action)]
    }

    /// Adds uniform noise in [-scale, scale] to every entry of one head.
    pub fn perturb_head<R: Rng>(&mut self, head: usize, scale: f64, rng: &mut R) {
        for v in &mut self.heads[head] {
            *v += rng.gen_range(-scale..=scale);
        }
    }

    /// Argmax action for a head at a state; ties break to the lowest index.
    pub fn greedy_action(&self, head: usize, state: usize) -> usize {
        assert!(head < self.heads.len(), "invalid head {head}");
        let base = self.idx(state, 0);
        let row = &self.heads[head][base..base + self.num_actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// State value under a head, defined as the max over actions.
    pub fn state_value(&self, head: usize, state: usize) -> f64 {
        assert!(head < self.heads.len(), "invalid head {head}");
        let base = self.idx(state, 0);
        self.heads[head][base..base + self.num_actions]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Moves one cell toward `target` by a step of `alpha`.
    pub fn apply_update(
        &mut self,
        head: usize,
        state: usize,
        action: usize,
        target: f64,
        alpha: f64,
    ) {
        assert!(target.is_finite(), "non-finite update target {target}");
        let i = self.idx(state, action);
        let q = &mut self.heads[head][i];
        *q += alpha * (target - *q);
    }

    /// Debug snapshot as CSV rows (head, state, action, value).
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "head,state,action,value")?;
        for (h, table) in self.heads.iter().enumerate() {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    writeln!(f, "{h},{s},{a},{}", table[s * self.num_actions + a])?;
                }
            }
        }
        f.flush()
    }
}

/// Discounted m-step return target: sum of discounted rewards plus a
/// discounted bootstrap value.
pub fn nstep_target(rewards: &[f64], bootstrap: f64, gamma: f64) -> f64 {
    assert!(!rewards.is_empty(), "empty reward window");
    let mut acc = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        acc += discount * r;
        discount *= gamma;
    }
    acc + discount * bootstrap
}

/// Number of return steps to keep before bootstrapping.
///
/// Without the cut this is the full window. With it, the return is truncated
/// at the first position `i >= 1` where the taken action differs from the
/// greedy one, so the target bootstraps at the state where the off-policy
/// action was taken. The first action never cuts: its own value is what is
/// being updated.
pub fn effective_horizon(actions: &[usize], greedy_actions: &[usize], watkins_cut: bool) -> usize {
    assert_eq!(
        actions.len(),
        greedy_actions.len(),
        "action / greedy length mismatch"
    );
    assert!(!actions.is_empty());
    if !watkins_cut {
        return actions.len();
    }
    for i in 1..actions.len() {
        if actions[i] != greedy_actions[i] {
            return i;
        }
    }
    actions.len()
}

/// One environment transition as seen by the learner.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub action: usize,
    pub reward_ext: f64,
    pub reward_int: f64,
    /// Ignored when `terminal` is set.
    pub next_state: usize,
    pub terminal: bool,
}

/// Online k-step updater for one episode.
///
/// Transitions are pushed as they happen; once k of them are buffered the
/// oldest state-action gets its k-step update, and [`NStepUpdater::finish`]
/// flushes the remaining tail with shortened windows at episode end
/// (bootstrapping zero at the terminal).
#[derive(Debug)]
pub struct NStepUpdater {
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards_ext: Vec<f64>,
    rewards_int: Vec<f64>,
    next_front: usize,
}

impl NStepUpdater {
    pub fn new(initial_state: usize) -> Self {
        Self {
            states: vec![initial_state],
            actions: Vec::new(),
            rewards_ext: Vec::new(),
            rewards_int: Vec::new(),
            next_front: 0,
        }
    }

    /// Records a transition and applies any update that became ready.
    pub fn push(&mut self, q: &mut QTable, cfg: &LearnerConfig, t: Transition) {
        self.actions.push(t.action);
        self.rewards_ext.push(t.reward_ext);
        self.rewards_int.push(t.reward_int);
        self.states.push(if t.terminal { 0 } else { t.next_state });
        if t.terminal {
            self.finish(q, cfg);
        } else if self.actions.len() >= self.next_front + cfg.k {
            self.update_front(q, cfg, false);
        }
    }

    /// Flushes all pending updates, treating the end of the buffer as terminal.
    pub fn finish(&mut self, q: &mut QTable, cfg: &LearnerConfig) {
        while self.next_front < self.actions.len() {
            self.update_front(q, cfg, true);
        }
    }

    fn update_front(&mut self, q: &mut QTable, cfg: &LearnerConfig, terminal_tail: bool) {
        let f = self.next_front;
        let t_end = self.actions.len();
        let window = cfg.k.min(t_end - f);
        for head in 0..q.num_heads() {
            let rewards = if Some(head) == q.intrinsic_head() {
                &self.rewards_int
            } else {
                &self.rewards_ext
            };
            let m = if cfg.watkins_cut {
                let greedy: Vec<usize> = self.states[f..f + window]
                    .iter()
                    .map(|&s| q.greedy_action(head, s))
                    .collect();
                effective_horizon(&self.actions[f..f + window], &greedy, true)
            } else {
                window
            };
            let bootstrap = if terminal_tail && f + m == t_end {
                0.0
            } else {
                q.state_value(head, self.states[f + m])
            };
            let target = nstep_target(&rewards[f..f + m], bootstrap, cfg.gamma);
            q.apply_update(head, self.states[f], self.actions[f], target, cfg.alpha);
        }
        self.next_front += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn greedy_action_takes_strict_argmax() {
        let mut q = QTable::new(1, 2, 1, false);
        q.apply_update(0, 0, 1, 1.0, 1.0);
        assert_eq!(q.greedy_action(0, 0), 1);
    }

    #[test]
    fn greedy_action_breaks_ties_low() {
        let mut q = QTable::new(1, 2, 1, false);
        q.apply_update(0, 0, 0, 0.5, 1.0);
        q.apply_update(0, 0, 1, 0.5, 1.0);
        assert_eq!(q.greedy_action(0, 0), 0);
    }

    #[test]
    fn greedy_action_on_unseen_state_defaults_to_zero() {
        let q = QTable::new(3, 2, 1, false);
        assert_eq!(q.greedy_action(0, 2), 0);
        assert_eq!(q.state_value(0, 2), 0.0);
    }

    #[test]
    fn state_value_is_max_over_actions() {
        let mut q = QTable::new(1, 2, 1, false);
        q.apply_update(0, 0, 0, -1.0, 1.0);
        q.apply_update(0, 0, 1, 3.0, 1.0);
        assert_eq!(q.state_value(0, 0), 3.0);
        let mut tie = QTable::new(1, 2, 1, false);
        tie.apply_update(0, 0, 0, 2.0, 1.0);
        tie.apply_update(0, 0, 1, 2.0, 1.0);
        assert_eq!(tie.state_value(0, 0), 2.0);
    }

    #[test]
    fn nstep_target_examples() {
        assert_abs_diff_eq!(
            nstep_target(&[1.0, 0.0, 2.0], 4.0, 0.5),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(nstep_target(&[0.0], 0.0, 0.9), 0.0);
        assert_eq!(nstep_target(&[7.5], 0.0, 1.0), 7.5);
    }

    #[test]
    #[should_panic(expected = "empty reward window")]
    fn nstep_target_rejects_empty_window() {
        nstep_target(&[], 1.0, 0.9);
    }

    #[test]
    fn apply_update_examples() {
        let mut q = QTable::new(1, 2, 1, false);
        q.apply_update(0, 0, 0, 1.0, 0.5);
        assert_eq!(q.value(0, 0, 0), 0.5);
        q.apply_update(0, 0, 0, 100.0, 0.0);
        assert_eq!(q.value(0, 0, 0), 0.5);
        let mut fixed = QTable::new(1, 2, 1, false);
        fixed.apply_update(0, 0, 0, 1.0, 1.0);
        fixed.apply_update(0, 0, 0, 1.0, 0.9);
        assert_eq!(fixed.value(0, 0, 0), 1.0);
    }

    #[test]
    fn effective_horizon_examples() {
        assert_eq!(
            effective_horizon(&[0, 1, 0, 1, 0], &[1, 0, 1, 0, 1], false),
            5
        );
        assert_eq!(effective_horizon(&[0, 1, 0], &[0, 1, 0], true), 3);
        assert_eq!(effective_horizon(&[0, 1, 0], &[0, 0, 0], true), 1);
        // First action never cuts.
        assert_eq!(effective_horizon(&[1, 0, 0], &[0, 0, 0], true), 3);
    }

    proptest! {
        #[test]
        fn one_step_target_is_reward_plus_discounted_bootstrap(
            r in -10.0f64..10.0,
            b in -10.0f64..10.0,
            g in 0.0f64..=1.0,
        ) {
            prop_assert!((nstep_target(&[r], b, g) - (r + g * b)).abs() < 1e-12);
        }
    }

    /// Three-state deterministic chain used as a convergence fixture:
    /// state 0 --a1--> state 1 --a1--> terminal (+1); a0 returns to state 0.
    fn chain_transition(state: usize, action: usize) -> (Option<usize>, f64) {
        match (state, action) {
            (0, 0) => (Some(0), 0.0),
            (0, 1) => (Some(1), 0.0),
            (1, 0) => (Some(0), 0.0),
            (1, 1) => (None, 1.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sweeps_converge_to_value_iteration_fixed_point() {
        let gamma = 0.9;
        // Independent oracle: value iteration on V, then one Bellman backup.
        let mut v = [0.0f64; 2];
        for _ in 0..2000 {
            let mut next = [0.0f64; 2];
            for (s, slot) in next.iter_mut().enumerate() {
                *slot = (0..2)
                    .map(|a| {
                        let (sn, r) = chain_transition(s, a);
                        r + gamma * sn.map_or(0.0, |sn| v[sn])
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            v = next;
        }
        let q_star = |s: usize, a: usize| {
            let (sn, r) = chain_transition(s, a);
            r + gamma * sn.map_or(0.0, |sn| v[sn])
        };

        let mut q = QTable::new(2, 2, 1, false);
        for _ in 0..2000 {
            for s in 0..2 {
                for a in 0..2 {
                    let (sn, r) = chain_transition(s, a);
                    let bootstrap = sn.map_or(0.0, |sn| q.state_value(0, sn));
                    q.apply_update(0, s, a, nstep_target(&[r], bootstrap, gamma), 0.5);
                }
            }
        }
        for s in 0..2 {
            for a in 0..2 {
                assert!(
                    (q.value(0, s, a) - q_star(s, a)).abs() < 1e-6,
                    "Q({s},{a}) = {} vs Q* = {}",
                    q.value(0, s, a),
                    q_star(s, a)
                );
            }
        }
    }

    #[test]
    fn identical_heads_stay_identical_under_shared_updates() {
        let cfg = LearnerConfig {
            ensemble_size: 2,
            ..Default::default()
        };
        let mut q = QTable::new(4, 2, 2, false);
        let mut up = NStepUpdater::new(0);
        for t in 0..20 {
            let s = t % 4;
            let terminal = t == 19;
            up.push(
                &mut q,
                &cfg,
                Transition {
                    action: t % 2,
                    reward_ext: (t as f64) * 0.1,
                    reward_int: 0.0,
                    next_state: (s + 1) % 4,
                    terminal,
                },
            );
        }
        for s in 0..4 {
            for a in 0..2 {
                assert_eq!(q.value(0, s, a).to_bits(), q.value(1, s, a).to_bits());
            }
        }
    }

    #[test]
    fn perturbed_heads_diverge_under_watkins_cut() {
        use rand::SeedableRng;
        let cfg = LearnerConfig {
            ensemble_size: 2,
            watkins_cut: true,
            ..Default::default()
        };
        let mut q = QTable::new(4, 2, 2, false);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        q.perturb_head(1, 0.01, &mut rng);
        let mut up = NStepUpdater::new(0);
        for t in 0..40 {
            let s = t % 4;
            up.push(
                &mut q,
                &cfg,
                Transition {
                    action: (t / 2) % 2,
                    reward_ext: 0.3,
                    reward_int: 0.0,
                    next_state: (s + 1) % 4,
                    terminal: t == 39,
                },
            );
        }
        let differs = (0..4).any(|s| (0..2).any(|a| q.value(0, s, a) != q.value(1, s, a)));
        assert!(differs);
    }

    #[test]
    fn updater_matches_bruteforce_nstep_targets_on_short_episode() {
        // Hand-check a 3-step episode with k=2, alpha=1, no cut:
        // fronts get targets r0 + g*r1 + g^2 * maxQ(s2), then the tail flush.
        let cfg = LearnerConfig {
            k: 2,
            gamma: 0.5,
            alpha: 1.0,
            ..Default::default()
        };
        let mut q = QTable::new(4, 2, 1, false);
        let mut up = NStepUpdater::new(0);
        up.push(
            &mut q,
            &cfg,
            Transition {
                action: 0,
                reward_ext: 1.0,
                reward_int: 0.0,
                next_state: 1,
                terminal: false,
            },
        );
        up.push(
            &mut q,
            &cfg,
            Transition {
                action: 0,
                reward_ext: 2.0,
                reward_int: 0.0,
                next_state: 2,
                terminal: false,
            },
        );
        // front 0 updated now: target = 1 + 0.5*2 + 0.25*0 = 2.0
        assert_eq!(q.value(0, 0, 0), 2.0);
        up.push(
            &mut q,
            &cfg,
            Transition {
                action: 1,
                reward_ext: 4.0,
                reward_int: 0.0,
                next_state: 3,
                terminal: true,
            },
        );
        // flush: front 1 target = 2 + 0.5*4 = 4 (terminal), front 2 target = 4.
        assert_eq!(q.value(0, 1, 0), 4.0);
        assert_eq!(q.value(0, 2, 1), 4.0);
    }
}
