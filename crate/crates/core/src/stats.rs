//! Behavioural summary statistics over per-step mode traces.
//!
//! The characteristic quantities are the overall explore fraction `p_X`, the
//! median explore-period length `med_X` in raw steps, and its episode-relative
//! counterpart `rmed_X` (each period length divided by its own episode's
//! length). Period lengths are pooled across episodes before taking medians.

use crate::switching::Mode;

/// Per-step mode sequence of one behaviour episode.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub modes: Vec<Mode>,
    pub episode_return: f64,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Maximal runs of equal mode, in order. Lengths sum to the trace length.
pub fn periods(trace: &EpisodeTrace) -> Vec<(Mode, usize)> {
    assert!(!trace.is_empty(), "periods of an empty trace");
    let mut out: Vec<(Mode, usize)> = Vec::new();
    for &m in &trace.modes {
        match out.last_mut() {
            Some((mode, len)) if *mode == m => *len += 1,
            _ => out.push((m, 1)),
        }
    }
    out
}

/// Fraction of explore steps pooled over all traces.
pub fn p_x(traces: &[EpisodeTrace]) -> f64 {
    assert!(!traces.is_empty());
    let total: usize = traces.iter().map(EpisodeTrace::len).sum();
    let explore: usize = traces
        .iter()
        .flat_map(|t| &t.modes)
        .filter(|m| **m == Mode::Explore)
        .count();
    explore as f64 / total as f64
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite length"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn explore_lengths(traces: &[EpisodeTrace]) -> impl Iterator<Item = (usize, usize)> + '_ {
    // Yields (period length, episode length) for every explore period.
    traces.iter().flat_map(|t| {
        let episode_len = t.len();
        periods(t)
            .into_iter()
            .filter(|(m, _)| *m == Mode::Explore)
            .map(move |(_, len)| (len, episode_len))
    })
}

/// Median explore-period length in steps, pooled; `None` without any explore
/// period. Even counts average the middle two.
pub fn med_x(traces: &[EpisodeTrace]) -> Option<f64> {
    median(explore_lengths(traces).map(|(len, _)| len as f64).collect())
}

/// Median explore-period length as a fraction of its episode's length.
pub fn rmed_x(traces: &[EpisodeTrace]) -> Option<f64> {
    median(
        explore_lengths(traces)
            .map(|(len, episode_len)| len as f64 / episode_len as f64)
            .collect(),
    )
}

/// Bundle of the three summary statistics over a set of traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationStats {
    pub p_x: f64,
    pub med_x: Option<f64>,
    pub rmed_x: Option<f64>,
}

impl ExplorationStats {
    pub fn compute(traces: &[EpisodeTrace]) -> Self {
        Self {
            p_x: p_x(traces),
            med_x: med_x(traces),
            rmed_x: rmed_x(traces),
        }
    }
}
