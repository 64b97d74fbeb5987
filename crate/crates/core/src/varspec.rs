//! Compact naming grammar for behaviour variants.
//!
//! A variant string is the single configuration entry point for experiments:
//!
//! ```text
//! <mode>-experiment-level-<X|G>
//! <mode>-step-level-<epsilon>
//! <mode>-episode-level-*
//! <mode>-intra(<dur>,<trigger>,<exploit>,<start>)
//! ```
//!
//! with `<mode>` one of `XU` (uniform), `XI` (intrinsic), `XS` (soft);
//! `<dur>` in `1|10|100|*|=` (`*` bandit-chosen, `=` symmetric with the entry
//! trigger); `<trigger>` `blind` or `informed`; `<exploit>` `n10..n10000`,
//! `p0.1..p0.0001`, `n*` or `p*` (informed triggers take only `p` values,
//! read as homeostasis target rates); `<start>` `G` or `X`.
//!
//! Example: `XU-intra(100,informed,p*,X)`.

use std::fmt;

use thiserror::Error;

use crate::switching::Mode;

/// Explore/exploit behaviour pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePair {
    /// Uniform random explore, greedy exploit.
    XU,
    /// Intrinsic-novelty-greedy explore, greedy exploit.
    XI,
    /// Soft pairing: 0.4-epsilon-greedy explore, 0.1-epsilon-greedy exploit.
    XS,
}

impl ModePair {
    fn token(self) -> &'static str {
        match self {
            ModePair::XU => "XU",
            ModePair::XI => "XI",
            ModePair::XS => "XS",
        }
    }
}

/// Explore-period duration field of an intra-episodic variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExploreDur {
    Fixed(u32),
    /// `*`: chosen per episode by a bandit over {1, 10, 100}.
    Bandit,
    /// `=`: exit by the same mechanism as entry.
    Symmetric,
}

/// Trigger family of an intra-episodic variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerKind {
    Blind,
    Informed,
}

/// Exploit-side parameter of an intra-episodic variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExploitParam {
    /// `n<steps>`: deterministic counter period.
    Steps(u32),
    /// `p<value>`: per-step entry probability (blind) or target rate (informed).
    Prob(f64),
    /// `n*`: bandit over {10, 100, 1000, 10000}.
    StepsBandit,
    /// `p*`: bandit over {0.1, 0.01, 0.001, 0.0001}.
    ProbBandit,
}

/// Intra-episodic switching configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraSpec {
    pub explore_dur: ExploreDur,
    pub trigger: TriggerKind,
    pub exploit_param: ExploitParam,
    pub start_mode: Mode,
}

/// Granularity at which the behaviour mode is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Granularity {
    /// One mode for the entire experiment.
    ExperimentLevel(Mode),
    /// Independent per-step explore decision with this probability.
    StepLevel(f64),
    /// Mode fixed per episode, adapted by a bandit.
    EpisodeLevel,
    Intra(IntraSpec),
}

/// A parsed variant: mode pairing plus switching granularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSpec {
    pub mode_pair: ModePair,
    pub granularity: Granularity,
}

pub const EXPLORE_DUR_GRID: [u32; 3] = [1, 10, 100];
pub const EXPLOIT_STEPS_GRID: [u32; 4] = [10, 100, 1000, 10000];
pub const EXPLOIT_PROB_GRID: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];

/// Parse failure, carrying the byte position and offending token.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid variant at byte {position}: {message} (found `{found}`)")]
pub struct ParseError {
    pub position: usize,
    pub found: String,
    pub message: String,
}

fn err(position: usize, found: &str, message: impl Into<String>) -> ParseError {
    ParseError {
        position,
        found: found.to_string(),
        message: message.into(),
    }
}

/// Parses a variant string. The grammar is whitespace-free and case-sensitive.
pub fn parse_variant(text: &str) -> Result<VariantSpec, ParseError> {
    let (mode_token, rest, rest_pos) = match text.split_once('-') {
        Some((m, rest)) => (m, rest, m.len() + 1),
        None => return Err(err(0, text, "expected `<mode>-<granularity>`")),
    };
    let mode_pair = match mode_token {
        "XU" => ModePair::XU,
        "XI" => ModePair::XI,
        "XS" => ModePair::XS,
        other => return Err(err(0, other, "unknown mode pair, expected XU, XI or XS")),
    };

    let granularity = if let Some(level) = rest.strip_prefix("experiment-level-") {
        let pos = rest_pos + "experiment-level-".len();
        match level {
            "X" => Granularity::ExperimentLevel(Mode::Explore),
            "G" => Granularity::ExperimentLevel(Mode::Exploit),
            other => return Err(err(pos, other, "expected X or G")),
        }
    } else if let Some(eps) = rest.strip_prefix("step-level-") {
        let pos = rest_pos + "step-level-".len();
        let value: f64 = eps
            .parse()
            .map_err(|_| err(pos, eps, "expected a probability"))?;
        if !(value > 0.0 && value <= 1.0) {
            return Err(err(pos, eps, "step-level probability must be in (0, 1]"));
        }
        Granularity::StepLevel(value)
    } else if let Some(tail) = rest.strip_prefix("episode-level-") {
        let pos = rest_pos + "episode-level-".len();
        if tail != "*" {
            return Err(err(pos, tail, "episode-level takes `*`"));
        }
        Granularity::EpisodeLevel
    } else if let Some(args) = rest.strip_prefix("intra(") {
        let pos = rest_pos + "intra(".len();
        let inner = args
            .strip_suffix(')')
            .ok_or_else(|| err(rest_pos + rest.len(), rest, "missing closing `)`"))?;
        Granularity::Intra(parse_intra(inner, pos)?)
    } else {
        return Err(err(rest_pos, rest, "unknown granularity"));
    };

    Ok(VariantSpec {
        mode_pair,
        granularity,
    })
}

fn parse_intra(inner: &str, base: usize) -> Result<IntraSpec, ParseError> {
    let fields: Vec<&str> = inner.split(',').collect();
    if fields.len() != 4 {
        return Err(err(
            base,
            inner,
            format!("intra takes 4 fields, got {}", fields.len()),
        ));
    }
    let mut pos = base;

    let explore_dur = match fields[0] {
        "*" => ExploreDur::Bandit,
        "=" => ExploreDur::Symmetric,
        token => {
            let n: u32 = token
                .parse()
                .map_err(|_| err(pos, token, "expected explore duration 1|10|100|*|="))?;
            if !EXPLORE_DUR_GRID.contains(&n) {
                return Err(err(
                    pos,
                    token,
                    "explore duration outside grid {1, 10, 100}",
                ));
            }
            ExploreDur::Fixed(n)
        }
    };
    pos += fields[0].len() + 1;

    let trigger = match fields[1] {
        "blind" => TriggerKind::Blind,
        "informed" => TriggerKind::Informed,
        other => return Err(err(pos, other, "expected `blind` or `informed`")),
    };
    pos += fields[1].len() + 1;

    let exploit_param = parse_exploit_param(fields[2], pos)?;
    if trigger == TriggerKind::Informed {
        match exploit_param {
            ExploitParam::Prob(_) | ExploitParam::ProbBandit => {}
            _ => {
                return Err(err(
                    pos,
                    fields[2],
                    "informed triggers take a target rate (p...), not a step count",
                ))
            }
        }
    }
    pos += fields[2].len() + 1;

    let start_mode = match fields[3] {
        "G" => Mode::Exploit,
        "X" => Mode::Explore,
        other => return Err(err(pos, other, "expected start mode G or X")),
    };

    Ok(IntraSpec {
        explore_dur,
        trigger,
        exploit_param,
        start_mode,
    })
}

fn parse_exploit_param(token: &str, pos: usize) -> Result<ExploitParam, ParseError> {
    if token == "n*" {
        return Ok(ExploitParam::StepsBandit);
    }
    if token == "p*" {
        return Ok(ExploitParam::ProbBandit);
    }
    if let Some(num) = token.strip_prefix('n') {
        let n: u32 = num
            .parse()
            .map_err(|_| err(pos, token, "expected n<steps>"))?;
        if !EXPLOIT_STEPS_GRID.contains(&n) {
            return Err(err(
                pos,
                token,
                "step count outside grid {10, 100, 1000, 10000}",
            ));
        }
        return Ok(ExploitParam::Steps(n));
    }
    if let Some(num) = token.strip_prefix('p') {
        let p: f64 = num
            .parse()
            .map_err(|_| err(pos, token, "expected p<value>"))?;
        if !EXPLOIT_PROB_GRID.contains(&p) {
            return Err(err(
                pos,
                token,
                "probability outside grid {0.1, 0.01, 0.001, 0.0001}",
            ));
        }
        return Ok(ExploitParam::Prob(p));
    }
    Err(err(pos, token, "expected n<steps>, p<value>, n* or p*"))
}

/// Canonical string form; [`parse_variant`] of the result gives back `spec`.
pub fn format_variant(spec: &VariantSpec) -> String {
    spec.to_string()
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-", self.mode_pair.token())?;
        match &self.granularity {
            Granularity::ExperimentLevel(Mode::Explore) => write!(f, "experiment-level-X"),
            Granularity::ExperimentLevel(Mode::Exploit) => write!(f, "experiment-level-G"),
            Granularity::StepLevel(eps) => write!(f, "step-level-{eps}"),
            Granularity::EpisodeLevel => write!(f, "episode-level-*"),
            Granularity::Intra(intra) => {
                write!(f, "intra(")?;
                match intra.explore_dur {
                    ExploreDur::Fixed(n) => write!(f, "{n}")?,
                    ExploreDur::Bandit => write!(f, "*")?,
                    ExploreDur::Symmetric => write!(f, "=")?,
                }
                match intra.trigger {
                    TriggerKind::Blind => write!(f, ",blind,")?,
                    TriggerKind::Informed => write!(f, ",informed,")?,
                }
                match intra.exploit_param {
                    ExploitParam::Steps(n) => write!(f, "n{n}")?,
                    ExploitParam::Prob(p) => write!(f, "p{p}")?,
                    ExploitParam::StepsBandit => write!(f, "n*")?,
                    ExploitParam::ProbBandit => write!(f, "p*")?,
                }
                match intra.start_mode {
                    Mode::Exploit => write!(f, ",G)"),
                    Mode::Explore => write!(f, ",X)"),
                }
            }
        }
    }
}

/// Every expressible variant over the finite grids (step-level restricted to
/// the probability grid). Used by round-trip tests and the demo's preset list.
pub fn enumerate_grid() -> Vec<VariantSpec> {
    let mut out = Vec::new();
    for mode_pair in [ModePair::XU, ModePair::XI, ModePair::XS] {
        for g in [
            Granularity::ExperimentLevel(Mode::Explore),
            Granularity::ExperimentLevel(Mode::Exploit),
            Granularity::EpisodeLevel,
        ] {
            out.push(VariantSpec {
                mode_pair,
                granularity: g,
            });
        }
        for eps in EXPLOIT_PROB_GRID {
            out.push(VariantSpec {
                mode_pair,
                granularity: Granularity::StepLevel(eps),
            });
        }
        let durs = [
            ExploreDur::Fixed(1),
            ExploreDur::Fixed(10),
            ExploreDur::Fixed(100),
            ExploreDur::Bandit,
            ExploreDur::Symmetric,
        ];
        let exploits = [
            ExploitParam::Steps(10),
            ExploitParam::Steps(100),
            ExploitParam::Steps(1000),
            ExploitParam::Steps(10000),
            ExploitParam::Prob(0.1),
            ExploitParam::Prob(0.01),
            ExploitParam::Prob(0.001),
            ExploitParam::Prob(0.0001),
            ExploitParam::StepsBandit,
            ExploitParam::ProbBandit,
        ];
        for dur in durs {
            for trigger in [TriggerKind::Blind, TriggerKind::Informed] {
                for exploit in exploits {
                    if trigger == TriggerKind::Informed
                        && !matches!(exploit, ExploitParam::Prob(_) | ExploitParam::ProbBandit)
                    {
                        continue;
                    }
                    for start_mode in [Mode::Exploit, Mode::Explore] {
                        out.push(VariantSpec {
                            mode_pair,
                            granularity: Granularity::Intra(IntraSpec {
                                explore_dur: dur,
                                trigger,
                                exploit_param: exploit,
                                start_mode,
                            }),
                        });
                    }
                }
            }
        }
    }
    out
}
