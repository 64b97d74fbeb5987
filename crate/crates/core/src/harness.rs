//! Experiment orchestration: actors, evaluation, bandit wiring, CSV logging.
//!
//! One experiment runs one behaviour variant on one environment for a list of
//! seeds. Each seed is an isolated worker (own environment, learner,
//! controller, counts, RNG streams) writing its outputs to `out/seed_<s>/`:
//!
//! - `learning_curve.csv` — `episode,eval_return,normalized_return`
//! - `traces.csv` — `episode_id,step,mode,reward,trigger_signal` (behaviour
//!   steps only; the evaluator never contributes)
//! - `stats.csv` — `window,p_X,med_X,rmed_X` for the overall run and the
//!   first/last 10% of episodes
//! - `bandit_log.csv` — `episode,bandit,arm,return`
//! - `config.txt` — resolved flat key=value echo of the configuration
//!
//! Everything is deterministic given the configuration: every RNG stream is
//! seeded as `seed * 64 + role` for fixed role offsets, so reruns produce
//! bit-identical CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::{optimal_return, Env, EnvError, EnvKind, EnvSpec};
use crate::intrinsic::VisitCounts;
use crate::meta_bandit::Bandit;
use crate::qlearner::{LearnerConfig, NStepUpdater, QTable, Transition};
use crate::stats::{EpisodeTrace, ExplorationStats};
use crate::switching::{
    action_mismatch, q_variance, Controller, ExploreDuration, InformedSignal, Mode, PromiseWindow,
    SwitchPolicy, Trigger,
};
use crate::varspec::{
    ExploitParam, ExploreDur, Granularity, ModePair, TriggerKind, VariantSpec, EXPLOIT_PROB_GRID,
    EXPLOIT_STEPS_GRID, EXPLORE_DUR_GRID,
};

const STREAM_CONTROLLER: u64 = 0;
const STREAM_BEHAVIOUR: u64 = 1;
const STREAM_HEAD_INIT: u64 = 2;

/// Scale of the initialisation noise on ensemble heads beyond the first.
const HEAD_INIT_NOISE: f64 = 0.01;

/// Epsilons of the soft mode pairing.
const SOFT_EXPLORE_EPS: f64 = 0.4;
const SOFT_EXPLOIT_EPS: f64 = 0.1;

fn stream_rng(seed: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(64).wrapping_add(role))
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Variant(#[from] crate::varspec::ParseError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub variant: VariantSpec,
    pub env: EnvSpec,
    pub seeds: Vec<u64>,
    pub total_episodes: u32,
    pub eval_every: u32,
    pub eval_episodes: u32,
    pub learner: LearnerConfig,
    pub top_k: usize,
    pub informed_signal: InformedSignal,
    pub global_counts: bool,
    pub shared_bandit: bool,
    pub parallel: bool,
    pub dump_qtable: bool,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.total_episodes < 1 {
            return bad("total_episodes must be at least 1".into());
        }
        if self.eval_every < 1 || self.eval_episodes < 1 {
            return bad("eval_every and eval_episodes must be at least 1".into());
        }
        let l = &self.learner;
        if l.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(l.alpha > 0.0 && l.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", l.alpha));
        }
        if !(l.gamma > 0.0 && l.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", l.gamma));
        }
        if l.ensemble_size < 1 {
            return bad("ensemble size must be at least 1".into());
        }
        if self.top_k < 1 || self.top_k > self.env.num_actions() {
            return bad(format!(
                "top_k {} outside 1..={}",
                self.top_k,
                self.env.num_actions()
            ));
        }
        let uses_informed = matches!(
            self.variant.granularity,
            Granularity::Intra(i) if i.trigger == TriggerKind::Informed
        );
        if uses_informed
            && matches!(
                self.informed_signal,
                InformedSignal::ActionMismatch | InformedSignal::QVariance
            )
            && l.ensemble_size < 2
        {
            return bad("ensemble triggers need an ensemble of at least 2 heads".into());
        }
        Ok(())
    }
}

fn informed_signal_token(signal: InformedSignal) -> &'static str {
    match signal {
        InformedSignal::ValuePromise => "promise",
        InformedSignal::ActionMismatch => "mismatch",
        InformedSignal::QVariance => "qvar",
    }
}

/// Parses `deepsea:<N>` or `chain:<N>`.
pub fn parse_env_spec(text: &str) -> Result<EnvSpec, ExperimentError> {
    let (kind, size) = text
        .split_once(':')
        .ok_or_else(|| ExperimentError::Config(format!("env `{text}` is not <kind>:<N>")))?;
    let kind = match kind {
        "deepsea" => EnvKind::DeepSea,
        "chain" => EnvKind::DistractorChain,
        other => return Err(ExperimentError::Config(format!("unknown env `{other}`"))),
    };
    let size: u32 = size
        .parse()
        .map_err(|_| ExperimentError::Config(format!("bad env size in `{text}`")))?;
    Ok(EnvSpec::new(kind, size)?)
}

pub fn format_env_spec(spec: &EnvSpec) -> String {
    let kind = match spec.kind {
        EnvKind::DeepSea => "deepsea",
        EnvKind::DistractorChain => "chain",
    };
    format!("{kind}:{}", spec.size)
}

/// Flat key=value configuration layer. A file provides one layer and CLI
/// flags another; later layers override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverlay {
    map: BTreeMap<String, String>,
}

impl ConfigOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut overlay = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            overlay.set(key.trim(), value.trim());
        }
        Ok(overlay)
    }

    pub fn merge(mut self, over: ConfigOverlay) -> Self {
        self.map.extend(over.map);
        self
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse_key<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ExperimentError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| ExperimentError::Config(format!("bad value `{raw}` for {key}"))),
        }
    }

    /// Builds the experiment configuration; `variant`, `env`, `episodes` and
    /// `out` are required, everything else has defaults.
    pub fn build(&self) -> Result<ExperimentConfig, ExperimentError> {
        let require = |key: &str| {
            self.get(key)
                .ok_or_else(|| ExperimentError::Config(format!("missing required key `{key}`")))
        };
        let variant = crate::varspec::parse_variant(require("variant")?)?;
        let env = parse_env_spec(require("env")?)?;
        let total_episodes: u32 = require("episodes")?
            .parse()
            .map_err(|_| ExperimentError::Config("bad value for episodes".into()))?;
        let out_dir = PathBuf::from(require("out")?);

        let seeds = match self.get("seeds") {
            None => vec![0, 1, 2],
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ExperimentError::Config(format!("bad seed list `{raw}`")))?,
        };

        let informed_signal = match self.get("informed_signal").unwrap_or("promise") {
            "promise" => InformedSignal::ValuePromise,
            "mismatch" => InformedSignal::ActionMismatch,
            "qvar" => InformedSignal::QVariance,
            other => {
                return Err(ExperimentError::Config(format!(
                    "unknown informed_signal `{other}` (promise|mismatch|qvar)"
                )))
            }
        };

        let defaults = LearnerConfig::default();
        let learner = LearnerConfig {
            k: self.parse_key("k", defaults.k)?,
            gamma: self.parse_key("gamma", defaults.gamma)?,
            alpha: self.parse_key("alpha", defaults.alpha)?,
            watkins_cut: self.parse_key("watkins_cut", false)?,
            ensemble_size: self.parse_key("ensemble", 1)?,
            intrinsic_enabled: variant.mode_pair == ModePair::XI,
        };

        let config = ExperimentConfig {
            variant,
            env,
            seeds,
            total_episodes,
            eval_every: self.parse_key("eval_every", 100)?,
            eval_episodes: self.parse_key("eval_episodes", 1)?,
            learner,
            top_k: self.parse_key("top_k", 1)?,
            informed_signal,
            global_counts: self.parse_key("global_counts", false)?,
            shared_bandit: self.parse_key("shared_bandit", false)?,
            parallel: self.parse_key("parallel", false)?,
            dump_qtable: self.parse_key("dump_qtable", false)?,
            out_dir,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Meta-bandits active for one experiment; any subset may be present
/// depending on the variant's `*` fields.
#[derive(Debug)]
struct MetaBandits {
    explore_dur: Option<Bandit<u64>>,
    exploit_steps: Option<Bandit<u64>>,
    exploit_prob: Option<Bandit<f64>>,
    episode_mode: Option<Bandit<Mode>>,
}

impl MetaBandits {
    fn for_variant(variant: &VariantSpec) -> Self {
        let mut b = Self {
            explore_dur: None,
            exploit_steps: None,
            exploit_prob: None,
            episode_mode: None,
        };
        match variant.granularity {
            Granularity::EpisodeLevel => {
                b.episode_mode = Some(Bandit::new(vec![Mode::Exploit, Mode::Explore]));
            }
            Granularity::Intra(intra) => {
                if intra.explore_dur == ExploreDur::Bandit {
                    b.explore_dur = Some(Bandit::new(
                        EXPLORE_DUR_GRID.iter().map(|&n| n as u64).collect(),
                    ));
                }
                match intra.exploit_param {
                    ExploitParam::StepsBandit => {
                        b.exploit_steps = Some(Bandit::new(
                            EXPLOIT_STEPS_GRID.iter().map(|&n| n as u64).collect(),
                        ));
                    }
                    ExploitParam::ProbBandit => {
                        b.exploit_prob = Some(Bandit::new(EXPLOIT_PROB_GRID.to_vec()));
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        b
    }

    fn any(&self) -> bool {
        self.explore_dur.is_some()
            || self.exploit_steps.is_some()
            || self.exploit_prob.is_some()
            || self.episode_mode.is_some()
    }
}

/// Arms drawn for one episode, kept so the episodic return can be credited.
#[derive(Debug, Clone, Copy, Default)]
struct EpisodeDraw {
    explore_dur: Option<(usize, u64)>,
    exploit_steps: Option<(usize, u64)>,
    exploit_prob: Option<(usize, f64)>,
    episode_mode: Option<(usize, Mode)>,
}

fn sample_bandits(bandits: &MetaBandits) -> EpisodeDraw {
    let mut draw = EpisodeDraw::default();
    if let Some(b) = &bandits.explore_dur {
        let i = b.sample();
        draw.explore_dur = Some((i, *b.arm(i)));
    }
    if let Some(b) = &bandits.exploit_steps {
        let i = b.sample();
        draw.exploit_steps = Some((i, *b.arm(i)));
    }
    if let Some(b) = &bandits.exploit_prob {
        let i = b.sample();
        draw.exploit_prob = Some((i, *b.arm(i)));
    }
    if let Some(b) = &bandits.episode_mode {
        let i = b.sample();
        draw.episode_mode = Some((i, *b.arm(i)));
    }
    draw
}

fn update_bandits(bandits: &mut MetaBandits, draw: &EpisodeDraw, episodic_return: f64) {
    if let (Some(b), Some((i, _))) = (&mut bandits.explore_dur, draw.explore_dur) {
        b.update(i, episodic_return);
    }
    if let (Some(b), Some((i, _))) = (&mut bandits.exploit_steps, draw.exploit_steps) {
        b.update(i, episodic_return);
    }
    if let (Some(b), Some((i, _))) = (&mut bandits.exploit_prob, draw.exploit_prob) {
        b.update(i, episodic_return);
    }
    if let (Some(b), Some((i, _))) = (&mut bandits.episode_mode, draw.episode_mode) {
        b.update(i, episodic_return);
    }
}

/// Resolves this episode's switch policy from the variant and the bandit draw.
fn resolve_policy(
    variant: &VariantSpec,
    signal: InformedSignal,
    draw: &EpisodeDraw,
) -> Option<SwitchPolicy> {
    let Granularity::Intra(intra) = variant.granularity else {
        return None;
    };
    let trigger = match (intra.trigger, intra.exploit_param) {
        (TriggerKind::Blind, ExploitParam::Steps(n)) => Trigger::BlindStep {
            exploit_steps: n as u64,
        },
        (TriggerKind::Blind, ExploitParam::StepsBandit) => Trigger::BlindStep {
            exploit_steps: draw.exploit_steps.expect("steps bandit not drawn").1,
        },
        (TriggerKind::Blind, ExploitParam::Prob(p)) => Trigger::BlindProb { prob: p },
        (TriggerKind::Blind, ExploitParam::ProbBandit) => Trigger::BlindProb {
            prob: draw.exploit_prob.expect("prob bandit not drawn").1,
        },
        (TriggerKind::Informed, ExploitParam::Prob(rate)) => Trigger::Informed {
            signal,
            target_rate: rate,
        },
        (TriggerKind::Informed, ExploitParam::ProbBandit) => Trigger::Informed {
            signal,
            target_rate: draw.exploit_prob.expect("rate bandit not drawn").1,
        },
        (TriggerKind::Informed, _) => unreachable!("informed trigger with step parameter"),
    };
    let explore_duration = match intra.explore_dur {
        ExploreDur::Fixed(n) => ExploreDuration::Fixed(n as u64),
        ExploreDur::Bandit => {
            ExploreDuration::BanditChosen(draw.explore_dur.expect("duration bandit not drawn").1)
        }
        ExploreDur::Symmetric => ExploreDuration::Symmetric,
    };
    Some(SwitchPolicy {
        trigger,
        explore_duration,
        start_mode: intra.start_mode,
    })
}

/// One greedy-evaluation point on the learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub episode: u32,
    pub eval_return: f64,
    pub normalized_return: f64,
}

/// One row of the per-episode bandit log.
#[derive(Debug, Clone)]
pub struct BanditRow {
    pub episode: u32,
    pub bandit: &'static str,
    pub arm: String,
    pub episodic_return: f64,
}

/// Everything one seed's run produced, before any of it is written to disk.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub traces: Vec<EpisodeTrace>,
    /// Per-episode rewards, parallel to `traces`.
    pub step_rewards: Vec<Vec<f64>>,
    /// Per-episode trigger signals, parallel to `traces`.
    pub step_signals: Vec<Vec<f64>>,
    pub evals: Vec<EvalPoint>,
    pub bandit_rows: Vec<BanditRow>,
    pub qtable: QTable,
}

/// Mean undiscounted return of the extrinsic greedy policy. No learning and
/// no visit counting happen here; evaluation never touches actor state.
pub fn evaluate_greedy(q: &QTable, spec: EnvSpec, episodes: u32, seed: u64) -> f64 {
    assert!(episodes >= 1);
    let mut total = 0.0;
    for e in 0..episodes {
        let mut env = Env::reset(spec, seed.wrapping_add(e as u64));
        loop {
            let action = q.greedy_action(0, env.state_id());
            let out = env.step(action);
            total += out.reward;
            if out.terminal {
                break;
            }
        }
    }
    total / episodes as f64
}

struct SeedWorker<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    bandits: Arc<Mutex<MetaBandits>>,
    counts: Arc<Mutex<VisitCounts>>,
}

impl SeedWorker<'_> {
    fn behaviour_action(
        &self,
        mode: Mode,
        q: &QTable,
        state: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let num_actions = self.config.env.num_actions();
        let greedy = q.greedy_action(0, state);
        match (mode, self.config.variant.mode_pair) {
            (Mode::Explore, ModePair::XU) => rng.gen_range(0..num_actions),
            (Mode::Explore, ModePair::XI) => {
                q.greedy_action(q.intrinsic_head().expect("intrinsic head missing"), state)
            }
            (Mode::Explore, ModePair::XS) => {
                if rng.gen_bool(SOFT_EXPLORE_EPS) {
                    rng.gen_range(0..num_actions)
                } else {
                    greedy
                }
            }
            (Mode::Exploit, ModePair::XS) => {
                if rng.gen_bool(SOFT_EXPLOIT_EPS) {
                    rng.gen_range(0..num_actions)
                } else {
                    greedy
                }
            }
            (Mode::Exploit, _) => greedy,
        }
    }

    fn trigger_signal(
        &self,
        policy: Option<&SwitchPolicy>,
        q: &QTable,
        promise: &PromiseWindow,
        state: usize,
        state_value: f64,
    ) -> f64 {
        let Some(SwitchPolicy {
            trigger: Trigger::Informed { signal, .. },
            ..
        }) = policy
        else {
            return 0.0;
        };
        match signal {
            InformedSignal::ValuePromise => promise.signal(state_value, self.config.learner.gamma),
            InformedSignal::ActionMismatch => action_mismatch(q, 0, 1, state, self.config.top_k),
            InformedSignal::QVariance => {
                let heads: Vec<usize> = q.extrinsic_heads().collect();
                q_variance(q, &heads, state)
            }
        }
    }

    fn run_collect(&self) -> SeedRun {
        let config = self.config;
        let mut rng_controller = stream_rng(self.seed, STREAM_CONTROLLER);
        let mut rng_behaviour = stream_rng(self.seed, STREAM_BEHAVIOUR);

        let mut q = QTable::new(
            config.env.num_states(),
            config.env.num_actions(),
            config.learner.ensemble_size,
            config.learner.intrinsic_enabled,
        );
        for head in 1..config.learner.ensemble_size {
            let mut rng = stream_rng(self.seed, STREAM_HEAD_INIT + head as u64);
            q.perturb_head(head, HEAD_INIT_NOISE, &mut rng);
        }

        let mut controller = Controller::new();
        let mut promise = PromiseWindow::new(config.learner.k);
        let episodes = config.total_episodes as usize;
        let mut run = SeedRun {
            seed: self.seed,
            traces: Vec::with_capacity(episodes),
            step_rewards: Vec::with_capacity(episodes),
            step_signals: Vec::with_capacity(episodes),
            evals: Vec::new(),
            bandit_rows: Vec::new(),
            qtable: QTable::new(1, 1, 1, false),
        };

        let optimal = optimal_return(&config.env);
        let has_bandits = self.bandits.lock().expect("bandit lock").any();

        for episode in 0..config.total_episodes {
            let draw = if has_bandits {
                sample_bandits(&self.bandits.lock().expect("bandit lock"))
            } else {
                EpisodeDraw::default()
            };
            let policy = resolve_policy(&config.variant, config.informed_signal, &draw);
            if let Some(p) = &policy {
                controller.episode_init(p);
            }
            promise.clear();

            let mut env = Env::reset(config.env, self.seed);
            let mut updater = NStepUpdater::new(env.state_id());
            if config.learner.intrinsic_enabled {
                self.counts
                    .lock()
                    .expect("counts lock")
                    .observe(env.state_id());
            }

            let mut modes = Vec::new();
            let mut rewards = Vec::new();
            let mut signals = Vec::new();
            let mut episodic_return = 0.0;
            loop {
                let state = env.state_id();
                let state_value = q.state_value(0, state);
                let signal = self.trigger_signal(policy.as_ref(), &q, &promise, state, state_value);
                let mode = match &config.variant.granularity {
                    Granularity::ExperimentLevel(m) => *m,
                    Granularity::StepLevel(eps) => {
                        if rng_controller.gen_bool(*eps) {
                            Mode::Explore
                        } else {
                            Mode::Exploit
                        }
                    }
                    Granularity::EpisodeLevel => draw.episode_mode.expect("episode mode drawn").1,
                    Granularity::Intra(_) => controller.step(
                        policy.as_ref().expect("intra policy resolved"),
                        signal,
                        &mut rng_controller,
                    ),
                };
                let action = self.behaviour_action(mode, &q, state, &mut rng_behaviour);
                let out = env.step(action);
                let reward_int = if config.learner.intrinsic_enabled && !out.terminal {
                    let mut counts = self.counts.lock().expect("counts lock");
                    counts.observe(env.state_id());
                    counts.novelty_reward(env.state_id())
                } else {
                    0.0
                };
                let next_state = if out.terminal { 0 } else { env.state_id() };
                updater.push(
                    &mut q,
                    &config.learner,
                    Transition {
                        action,
                        reward_ext: out.reward,
                        reward_int,
                        next_state,
                        terminal: out.terminal,
                    },
                );
                promise.push(state_value, out.reward);
                modes.push(mode);
                rewards.push(out.reward);
                signals.push(signal);
                episodic_return += out.reward;
                if out.terminal {
                    break;
                }
            }
            run.traces.push(EpisodeTrace {
                modes,
                episode_return: episodic_return,
            });
            run.step_rewards.push(rewards);
            run.step_signals.push(signals);

            if has_bandits {
                let mut bandits = self.bandits.lock().expect("bandit lock");
                update_bandits(&mut bandits, &draw, episodic_return);
                drop(bandits);
                let mut log = |bandit: &'static str, arm: String| {
                    run.bandit_rows.push(BanditRow {
                        episode,
                        bandit,
                        arm,
                        episodic_return,
                    });
                };
                if let Some((_, v)) = draw.explore_dur {
                    log("explore_dur", v.to_string());
                }
                if let Some((_, v)) = draw.exploit_steps {
                    log("exploit_steps", v.to_string());
                }
                if let Some((_, v)) = draw.exploit_prob {
                    log("exploit_prob", v.to_string());
                }
                if let Some((_, m)) = draw.episode_mode {
                    log("episode_mode", m.letter().to_string());
                }
            }

            if (episode + 1) % config.eval_every == 0 {
                let eval = evaluate_greedy(&q, config.env, config.eval_episodes, self.seed);
                run.evals.push(EvalPoint {
                    episode: episode + 1,
                    eval_return: eval,
                    normalized_return: eval / optimal,
                });
            }
        }
        run.qtable = q;
        run
    }

    fn write_outputs(&self, run: &SeedRun) -> Result<(), ExperimentError> {
        let config = self.config;
        let dir = config.out_dir.join(format!("seed_{}", self.seed));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;

        let open = |name: &str| -> Result<BufWriter<fs::File>, ExperimentError> {
            let path = dir.join(name);
            Ok(BufWriter::new(
                fs::File::create(&path).map_err(io_err(&path))?,
            ))
        };

        let mut trace_file = open("traces.csv")?;
        writeln!(trace_file, "episode_id,step,mode,reward,trigger_signal").map_err(io_err(&dir))?;
        for (episode, trace) in run.traces.iter().enumerate() {
            for (step, &mode) in trace.modes.iter().enumerate() {
                writeln!(
                    trace_file,
                    "{episode},{step},{},{},{}",
                    mode.letter(),
                    run.step_rewards[episode][step],
                    run.step_signals[episode][step]
                )
                .map_err(io_err(&dir))?;
            }
        }
        trace_file.flush().map_err(io_err(&dir))?;

        let mut curve_file = open("learning_curve.csv")?;
        writeln!(curve_file, "episode,eval_return,normalized_return").map_err(io_err(&dir))?;
        for p in &run.evals {
            writeln!(
                curve_file,
                "{},{},{}",
                p.episode, p.eval_return, p.normalized_return
            )
            .map_err(io_err(&dir))?;
        }
        curve_file.flush().map_err(io_err(&dir))?;

        let mut bandit_file = open("bandit_log.csv")?;
        writeln!(bandit_file, "episode,bandit,arm,return").map_err(io_err(&dir))?;
        for row in &run.bandit_rows {
            writeln!(
                bandit_file,
                "{},{},{},{}",
                row.episode, row.bandit, row.arm, row.episodic_return
            )
            .map_err(io_err(&dir))?;
        }
        bandit_file.flush().map_err(io_err(&dir))?;

        self.write_stats(&dir, &run.traces)?;
        self.write_config_echo(&dir)?;
        if config.dump_qtable {
            let path = dir.join("qtable.csv");
            run.qtable.write_csv(&path).map_err(io_err(&path))?;
        }
        Ok(())
    }

    fn write_stats(&self, dir: &Path, traces: &[EpisodeTrace]) -> Result<(), ExperimentError> {
        let path = dir.join("stats.csv");
        let mut f = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        writeln!(f, "window,p_X,med_X,rmed_X").map_err(io_err(&path))?;
        let window = (traces.len() / 10).max(1);
        let rows = [
            ("overall", traces),
            ("first_10pct", &traces[..window]),
            ("last_10pct", &traces[traces.len() - window..]),
        ];
        for (name, slice) in rows {
            let stats = ExplorationStats::compute(slice);
            let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                f,
                "{name},{},{},{}",
                stats.p_x,
                fmt_opt(stats.med_x),
                fmt_opt(stats.rmed_x)
            )
            .map_err(io_err(&path))?;
        }
        f.flush().map_err(io_err(&path))
    }

    fn write_config_echo(&self, dir: &Path) -> Result<(), ExperimentError> {
        let c = self.config;
        let path = dir.join("config.txt");
        let mut f = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        let l = &c.learner;
        write!(
            f,
            "variant={}\nenv={}\nstep_limit={}\nseed={}\nseeds={}\nepisodes={}\n\
             eval_every={}\neval_episodes={}\nk={}\ngamma={}\nalpha={}\nwatkins_cut={}\n\
             ensemble={}\nintrinsic={}\ntop_k={}\ninformed_signal={}\nglobal_counts={}\n\
             shared_bandit={}\nparallel={}\n",
            c.variant,
            format_env_spec(&c.env),
            c.env.step_limit,
            self.seed,
            c.seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            c.total_episodes,
            c.eval_every,
            c.eval_episodes,
            l.k,
            l.gamma,
            l.alpha,
            l.watkins_cut,
            l.ensemble_size,
            l.intrinsic_enabled,
            c.top_k,
            informed_signal_token(c.informed_signal),
            c.global_counts,
            c.shared_bandit,
            c.parallel,
        )
        .map_err(io_err(&path))?;
        f.flush().map_err(io_err(&path))
    }
}

/// Runs one seed in memory and returns everything it produced, without
/// touching the filesystem. `config.out_dir` is ignored. This is the same
/// loop [`run_experiment`] uses before writing its CSV files.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun, ExperimentError> {
    config.validate()?;
    let worker = SeedWorker {
        config,
        seed,
        bandits: Arc::new(Mutex::new(MetaBandits::for_variant(&config.variant))),
        counts: Arc::new(Mutex::new(VisitCounts::new())),
    };
    Ok(worker.run_collect())
}

/// Runs every seed of the experiment, writing one output directory per seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;

    let shared_bandits = config
        .shared_bandit
        .then(|| Arc::new(Mutex::new(MetaBandits::for_variant(&config.variant))));
    let shared_counts = config
        .global_counts
        .then(|| Arc::new(Mutex::new(VisitCounts::new())));

    let make_worker = |seed: u64| SeedWorker {
        config,
        seed,
        bandits: shared_bandits
            .clone()
            .unwrap_or_else(|| Arc::new(Mutex::new(MetaBandits::for_variant(&config.variant)))),
        counts: shared_counts
            .clone()
            .unwrap_or_else(|| Arc::new(Mutex::new(VisitCounts::new()))),
    };
    let run_one = |seed: u64| {
        let worker = make_worker(seed);
        let run = worker.run_collect();
        worker.write_outputs(&run)
    };

    if config.parallel && config.seeds.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .seeds
                .iter()
                .map(|&seed| scope.spawn(move || run_one(seed)))
                .collect();
            for h in handles {
                h.join().expect("seed worker panicked")?;
            }
            Ok(())
        })
    } else {
        for &seed in &config.seeds {
            run_one(seed)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_overlay(dir: &Path) -> ConfigOverlay {
        let mut o = ConfigOverlay::new();
        o.set("variant", "XU-intra(10,blind,n10,G)");
        o.set("env", "deepsea:4");
        o.set("episodes", "50");
        o.set("seeds", "0");
        o.set("eval_every", "10");
        o.set("out", dir.to_str().unwrap());
        o
    }

    #[test]
    fn smoke_run_writes_the_named_files() {
        let tmp = tempfile::tempdir().unwrap();
        let config = base_overlay(tmp.path()).build().unwrap();
        run_experiment(&config).unwrap();
        let seed_dir = tmp.path().join("seed_0");
        for name in [
            "learning_curve.csv",
            "traces.csv",
            "stats.csv",
            "bandit_log.csv",
            "config.txt",
        ] {
            assert!(seed_dir.join(name).exists(), "{name} missing");
        }
    }

    #[test]
    fn rerun_is_bit_identical() {
        let tmp_a = tempfile::tempdir().unwrap();
        let tmp_b = tempfile::tempdir().unwrap();
        for dir in [tmp_a.path(), tmp_b.path()] {
            let mut o = base_overlay(dir);
            o.set("variant", "XU-intra(*,blind,p*,G)");
            o.set("seeds", "0,1");
            run_experiment(&o.build().unwrap()).unwrap();
        }
        for seed in ["seed_0", "seed_1"] {
            for name in [
                "learning_curve.csv",
                "traces.csv",
                "stats.csv",
                "bandit_log.csv",
            ] {
                let a = fs::read(tmp_a.path().join(seed).join(name)).unwrap();
                let b = fs::read(tmp_b.path().join(seed).join(name)).unwrap();
                assert_eq!(a, b, "{seed}/{name} differs between reruns");
            }
        }
    }

    #[test]
    fn trace_rows_match_behaviour_steps() {
        let tmp = tempfile::tempdir().unwrap();
        let config = base_overlay(tmp.path()).build().unwrap();
        run_experiment(&config).unwrap();
        let text = fs::read_to_string(tmp.path().join("seed_0/traces.csv")).unwrap();
        // DeepSea(4) episodes last exactly 4 steps; 50 episodes + header.
        assert_eq!(text.lines().count(), 1 + 50 * 4);
        // The evaluator must not add rows beyond episode ids 0..50.
        assert!(text.lines().skip(1).all(|l| {
            let ep: u32 = l.split(',').next().unwrap().parse().unwrap();
            ep < 50
        }));
    }

    #[test]
    fn evaluate_greedy_on_optimal_and_zero_tables() {
        let spec = EnvSpec::new(EnvKind::DeepSea, 4).unwrap();
        let zero = QTable::new(spec.num_states(), 2, 1, false);
        assert_eq!(evaluate_greedy(&zero, spec, 3, 0), 0.0);

        let mut optimal_q = QTable::new(spec.num_states(), 2, 1, false);
        for s in 0..spec.num_states() {
            optimal_q.apply_update(0, s, 1, 1.0, 1.0);
        }
        let ret = evaluate_greedy(&optimal_q, spec, 2, 0);
        assert!((ret - 0.99).abs() < 1e-12, "greedy optimal return {ret}");
    }

    #[test]
    fn greedy_only_chain_locks_onto_distractor() {
        let tmp = tempfile::tempdir().unwrap();
        let mut o = base_overlay(tmp.path());
        o.set("variant", "XU-experiment-level-G");
        o.set("env", "chain:10");
        o.set("episodes", "200");
        o.set("eval_every", "200");
        let config = o.build().unwrap();
        run_experiment(&config).unwrap();
        let text = fs::read_to_string(tmp.path().join("seed_0/learning_curve.csv")).unwrap();
        let last = text.lines().last().unwrap();
        let eval: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert!(
            (eval - 0.1).abs() < 1e-12,
            "expected distractor return, got {eval}"
        );
    }

    #[test]
    fn config_file_layers_under_cli_overrides() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("exp.cfg");
        fs::write(
            &file,
            "variant=XU-step-level-0.01\nenv=deepsea:4\nepisodes=10\n# comment\nalpha=0.3\n",
        )
        .unwrap();
        let mut cli = ConfigOverlay::new();
        cli.set("out", tmp.path().to_str().unwrap());
        cli.set("alpha", "0.5");
        let config = ConfigOverlay::from_file(&file)
            .unwrap()
            .merge(cli)
            .build()
            .unwrap();
        assert_eq!(config.learner.alpha, 0.5);
        assert_eq!(config.total_episodes, 10);
    }

    #[test]
    fn invalid_configs_are_rejected_up_front() {
        let tmp = tempfile::tempdir().unwrap();
        let mut o = base_overlay(tmp.path());
        o.set("episodes", "0");
        assert!(o.build().is_err());

        let mut o = base_overlay(tmp.path());
        o.set("variant", "XU-intra(10,informed,p0.01,G)");
        o.set("informed_signal", "mismatch");
        assert!(o.build().is_err(), "mismatch trigger needs ensemble >= 2");

        let mut o = base_overlay(tmp.path());
        o.set("variant", "not-a-variant");
        assert!(o.build().is_err());
    }

    #[test]
    fn xi_variant_gets_intrinsic_head_and_runs() {
        let tmp = tempfile::tempdir().unwrap();
        let mut o = base_overlay(tmp.path());
        o.set("variant", "XI-intra(10,blind,n10,X)");
        o.set("episodes", "20");
        let config = o.build().unwrap();
        assert!(config.learner.intrinsic_enabled);
        run_experiment(&config).unwrap();
    }

    #[test]
    fn in_memory_run_matches_file_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let config = base_overlay(tmp.path()).build().unwrap();
        run_experiment(&config).unwrap();
        let run = run_seed(&config, 0).unwrap();
        let text = fs::read_to_string(tmp.path().join("seed_0/learning_curve.csv")).unwrap();
        let file_rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(file_rows.len(), run.evals.len());
        for (line, p) in file_rows.iter().zip(&run.evals) {
            assert_eq!(
                *line,
                format!("{},{},{}", p.episode, p.eval_return, p.normalized_return)
            );
        }
        assert_eq!(run.traces.len(), 50);
    }

    #[test]
    fn parallel_seeds_match_sequential_outputs() {
        let tmp_seq = tempfile::tempdir().unwrap();
        let tmp_par = tempfile::tempdir().unwrap();
        for (dir, parallel) in [(tmp_seq.path(), "false"), (tmp_par.path(), "true")] {
            let mut o = base_overlay(dir);
            o.set("seeds", "0,1,2");
            o.set("parallel", parallel);
            run_experiment(&o.build().unwrap()).unwrap();
        }
        for seed in ["seed_0", "seed_1", "seed_2"] {
            let a = fs::read(tmp_seq.path().join(seed).join("traces.csv")).unwrap();
            let b = fs::read(tmp_par.path().join(seed).join("traces.csv")).unwrap();
            assert_eq!(a, b);
        }
    }
}
