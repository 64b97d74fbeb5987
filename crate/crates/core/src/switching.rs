//! Mode controllers: when to enter and when to leave explore mode.
//!
//! Entry into explore mode is decided by a *trigger*: blind (a step counter or
//! a per-step coin flip, ignoring all agent state) or informed (a scalar
//! uncertainty signal fed through [`homeostasis_step`], which adapts its
//! threshold so switches happen at a configured target rate regardless of the
//! signal's scale). Exit is normally a fixed or bandit-chosen explore duration;
//! with symmetric switching, exit reuses the entry mechanism.
//!
//! Counter semantics, pinned by the tests below: a blind step trigger with
//! exploit parameter `n` makes the n-th consecutive exploit step the first
//! explore step; a fixed explore duration of `n` keeps exactly n explore steps
//! before the next step reverts to exploit.

use rand::Rng;

use crate::qlearner::QTable;

/// Behaviour mode of a single step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Explore,
    Exploit,
}

impl Mode {
    /// Single-letter form used in trace files: X for explore, G for exploit.
    pub fn letter(self) -> char {
        match self {
            Mode::Explore => 'X',
            Mode::Exploit => 'G',
        }
    }
}

/// Scalar uncertainty signals usable by informed triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformedSignal {
    /// Gap between a past value estimate and the discounted outcome since.
    ValuePromise,
    /// Disagreement of the top-k action sets of two ensemble heads.
    ActionMismatch,
    /// Mean per-action variance of Q values across ensemble heads.
    QVariance,
}

/// How explore mode is entered from exploit mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    /// Deterministic counter: fire on the n-th consecutive exploit step.
    BlindStep { exploit_steps: u64 },
    /// Coin flip with fixed probability on every exploit step.
    BlindProb { prob: f64 },
    /// Homeostasis over an uncertainty signal at a target switch rate.
    Informed {
        signal: InformedSignal,
        target_rate: f64,
    },
}

/// How explore mode is exited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExploreDuration {
    Fixed(u64),
    /// Resolved per episode by the meta-bandit.
    BanditChosen(u64),
    /// Exit decided by the same mechanism as entry.
    Symmetric,
}

/// A fully resolved switching policy for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPolicy {
    pub trigger: Trigger,
    pub explore_duration: ExploreDuration,
    pub start_mode: Mode,
}

/// Running moments of the homeostasis transform.
///
/// Initialised to (mean 0, variance 1, transformed mean 1, step 0); the
/// moments live for the whole experiment, across episode boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeostasisState {
    pub mean: f64,
    pub var: f64,
    pub exp_mean: f64,
    pub steps: u64,
}

impl Default for HomeostasisState {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            exp_mean: 1.0,
            steps: 0,
        }
    }
}

/// Floor on the standard-deviation divisor; the running variance is exactly
/// zero on a constant stream at t = 1.
const SIGMA_FLOOR: f64 = 1e-6;

/// One homeostasis update: standardise the signal with running moments,
/// exponentiate, and emit a switch with probability
/// `min(1, rate * x+ / mean(x+))`, so the long-run switch rate approaches
/// `target_rate` independently of the signal's scale and offset.
pub fn homeostasis_step<R: Rng>(
    h: &mut HomeostasisState,
    x: f64,
    target_rate: f64,
    rng: &mut R,
) -> bool {
    debug_assert!(target_rate > 0.0);
    h.steps += 1;
    let tau = (h.steps as f64).min(100.0 / target_rate);
    let w = 1.0 / tau;
    h.mean = (1.0 - w) * h.mean + w * x;
    h.var = (1.0 - w) * h.var + w * (x - h.mean) * (x - h.mean);
    let x_plus = ((x - h.mean) / h.var.sqrt().max(SIGMA_FLOOR)).exp();
    h.exp_mean = (1.0 - w) * h.exp_mean + w * x_plus;
    let p = (target_rate * x_plus / h.exp_mean).min(1.0);
    rng.gen_bool(p)
}

/// Value promise discrepancy: how much of the return promised by a value
/// estimate k steps ago has actually materialised.
///
/// `rewards[i]` is the reward from i steps ago (most recent first), weighted
/// by `gamma^i`; `v_past` is the estimate from k steps ago and `v_now` the
/// current one.
pub fn value_promise(v_past: f64, rewards: &[f64], v_now: f64, gamma: f64) -> f64 {
    assert!(
        v_past.is_finite() && v_now.is_finite(),
        "non-finite value estimate"
    );
    let mut promised = v_past;
    let mut discount = 1.0;
    for &r in rewards {
        assert!(r.is_finite(), "non-finite reward");
        promised -= discount * r;
        discount *= gamma;
    }
    (promised - discount * v_now).abs()
}

/// Ring buffer of the last k (state value, reward) pairs of the current
/// episode, feeding [`value_promise`]. Emits 0 until k transitions have been
/// seen, so episodes never switch on a half-filled window.
#[derive(Debug, Clone)]
pub struct PromiseWindow {
    entries: std::collections::VecDeque<(f64, f64)>,
    cap: usize,
}

impl PromiseWindow {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1);
        Self {
            entries: std::collections::VecDeque::with_capacity(k + 1),
            cap: k,
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Records the value of the state just acted from and the reward received.
    pub fn push(&mut self, state_value: f64, reward: f64) {
        self.entries.push_back((state_value, reward));
        if self.entries.len() > self.cap {
            self.entries.pop_front();
        }
    }

    /// Promise discrepancy against the current state value, or 0 while warming up.
    pub fn signal(&self, v_now: f64, gamma: f64) -> f64 {
        if self.entries.len() < self.cap {
            return 0.0;
        }
        let v_past = self.entries.front().expect("window non-empty").0;
        // Most recent reward first, matching the gamma^i weighting.
        let rewards: Vec<f64> = self.entries.iter().rev().map(|&(_, r)| r).collect();
        value_promise(v_past, &rewards, v_now, gamma)
    }
}

fn top_k_set(q: &QTable, head: usize, state: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q.num_actions()).collect();
    // Stable by value descending, ties to the lowest action index.
    order.sort_by(|&a, &b| {
        q.value(head, state, b)
            .partial_cmp(&q.value(head, state, a))
            .expect("non-finite Q value")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Disagreement between the top-k action sets of two heads: 1 minus the
/// fraction of overlap. 0 when the heads rank identically, 1 when disjoint.
pub fn action_mismatch(
    q: &QTable,
    head_a: usize,
    head_b: usize,
    state: usize,
    top_k: usize,
) -> f64 {
    assert!(head_a != head_b, "action mismatch needs two distinct heads");
    assert!(top_k >= 1 && top_k <= q.num_actions(), "top_k out of range");
    let set_a = top_k_set(q, head_a, state, top_k);
    let set_b = top_k_set(q, head_b, state, top_k);
    let overlap = set_a.iter().filter(|a| set_b.contains(a)).count();
    1.0 - overlap as f64 / top_k as f64
}

/// Mean over actions of the population variance of Q values across heads.
pub fn q_variance(q: &QTable, heads: &[usize], state: usize) -> f64 {
    assert!(
        heads.len() >= 2,
        "variance trigger needs at least two heads"
    );
    let n = heads.len() as f64;
    let mut total = 0.0;
    for a in 0..q.num_actions() {
        let mean = heads.iter().map(|&h| q.value(h, state, a)).sum::<f64>() / n;
        let var = heads
            .iter()
            .map(|&h| {
                let d = q.value(h, state, a) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        total += var;
    }
    total / q.num_actions() as f64
}

/// Per-actor mode controller for intra-episodic switching.
///
/// Mode and counters reset at every episode start; the homeostasis moments do
/// not — they are experiment-lifetime statistics.
#[derive(Debug, Clone)]
pub struct Controller {
    mode: Mode,
    steps_in_mode: u64,
    committed_explore: Option<u64>,
    homeostasis: HomeostasisState,
}

impl Controller {
    pub fn new() -> Self {
        Self {
            mode: Mode::Exploit,
            steps_in_mode: 0,
            committed_explore: None,
            homeostasis: HomeostasisState::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn homeostasis(&self) -> &HomeostasisState {
        &self.homeostasis
    }

    /// Resets per-episode state: the start mode and zeroed counters. An
    /// episode starting in explore mode commits to the policy's duration.
    pub fn episode_init(&mut self, policy: &SwitchPolicy) {
        self.mode = policy.start_mode;
        self.steps_in_mode = 0;
        self.committed_explore = match (policy.start_mode, policy.explore_duration) {
            (Mode::Explore, ExploreDuration::Fixed(n)) => Some(n),
            (Mode::Explore, ExploreDuration::BanditChosen(n)) => Some(n),
            _ => None,
        };
    }

    /// Decides the mode of the current step and advances the counters.
    ///
    /// `signal` is only read by informed triggers. The homeostasis moments are
    /// updated on every step, also while exploring, but an entry can only fire
    /// from exploit mode.
    pub fn step<R: Rng>(&mut self, policy: &SwitchPolicy, signal: f64, rng: &mut R) -> Mode {
        let informed_fire = match policy.trigger {
            Trigger::Informed { target_rate, .. } => {
                homeostasis_step(&mut self.homeostasis, signal, target_rate, rng)
            }
            _ => false,
        };
        match self.mode {
            Mode::Exploit => {
                let fire = match policy.trigger {
                    Trigger::BlindStep { exploit_steps } => self.steps_in_mode + 1 >= exploit_steps,
                    Trigger::BlindProb { prob } => rng.gen_bool(prob),
                    Trigger::Informed { .. } => informed_fire,
                };
                if fire {
                    self.mode = Mode::Explore;
                    self.steps_in_mode = 0;
                    self.committed_explore = match policy.explore_duration {
                        ExploreDuration::Fixed(n) | ExploreDuration::BanditChosen(n) => Some(n),
                        ExploreDuration::Symmetric => None,
                    };
                }
            }
            Mode::Explore => {
                let exit = match policy.explore_duration {
                    ExploreDuration::Fixed(_) | ExploreDuration::BanditChosen(_) => {
                        let n = self
                            .committed_explore
                            .expect("explore entered without duration");
                        self.steps_in_mode >= n
                    }
                    ExploreDuration::Symmetric => match policy.trigger {
                        Trigger::BlindStep { exploit_steps } => {
                            self.steps_in_mode + 1 >= exploit_steps
                        }
                        Trigger::BlindProb { prob } => rng.gen_bool(prob),
                        Trigger::Informed { .. } => informed_fire,
                    },
                };
                if exit {
                    self.mode = Mode::Exploit;
                    self.steps_in_mode = 0;
                    self.committed_explore = None;
                }
            }
        }
        self.steps_in_mode += 1;
        self.mode
    }
}

impl Default for Controller {
    fn default() -> Self {
        Self::new()
    }
}
