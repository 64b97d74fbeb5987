//! Two-mode exploration for tabular reinforcement learning.
//!
//! An agent behaves in one of two modes at every step: exploit (greedy pursuit
//! of extrinsic value) or explore (uniform random, intrinsic-novelty greedy, or
//! soft epsilon-greedy). This crate implements the machinery for deciding
//! *when* to switch between them:
//!
//! - [`switching`]: mode controllers for step-, episode-, experiment- and
//!   intra-episodic granularity, with blind (counter/coin) and informed
//!   (uncertainty-signal) triggers, plus the homeostasis transform that turns
//!   an arbitrary scalar signal stream into switches at a target rate.
//! - [`meta_bandit`]: a discounted-UCB bandit that adapts switching
//!   hyper-parameters from episodic return.
//! - [`qlearner`]: multi-head tabular n-step Q-learning with optional
//!   trace-cutting on non-greedy actions.
//! - [`intrinsic`]: count-based novelty reward for the intrinsic explore mode.
//! - [`envs`]: DeepSea and DistractorChain, two small hard-exploration
//!   environments with known optimal returns.
//! - [`stats`]: behavioural summary statistics (p_X, med_X, rmed_X) over
//!   per-step mode traces.
//! - [`varspec`]: parser/formatter for the compact variant naming grammar,
//!   e.g. `XU-intra(100,informed,p*,X)`.
//! - [`harness`]: experiment orchestration, CSV logging, and the CLI entry
//!   points.

pub mod envs;
pub mod harness;
pub mod intrinsic;
pub mod meta_bandit;
pub mod qlearner;
pub mod stats;
pub mod switching;
pub mod varspec;
