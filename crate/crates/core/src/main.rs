//! Command-line front end: `modeswitch run ...` and `modeswitch parse ...`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modeswitch::harness::{run_experiment, ConfigOverlay};
use modeswitch::varspec::{format_variant, parse_variant};

#[derive(Parser)]
#[command(
    name = "modeswitch",
    about = "Two-mode exploration experiments on tabular environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run an experiment and write per-seed CSV outputs.
    Run(RunArgs),
    /// Parse a variant string and print its resolved form.
    Parse { variant: String },
}

#[derive(Args)]
struct RunArgs {
    /// Behaviour variant, e.g. `XU-intra(100,informed,p*,X)`.
    #[arg(long)]
    variant: Option<String>,
    /// Environment as `deepsea:<N>` or `chain:<N>`.
    #[arg(long)]
    env: Option<String>,
    /// Number of training episodes per seed.
    #[arg(long)]
    episodes: Option<u32>,
    /// Comma-separated seed list (default 0,1,2).
    #[arg(long)]
    seeds: Option<String>,
    /// Evaluate the greedy policy every this many episodes.
    #[arg(long)]
    eval_every: Option<u32>,
    /// Episodes per greedy evaluation.
    #[arg(long)]
    eval_episodes: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// n-step horizon.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Cut n-step returns at non-greedy actions.
    #[arg(long)]
    watkins_cut: Option<bool>,
    /// Number of extrinsic heads.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Top-k size for the action-mismatch trigger.
    #[arg(long)]
    top_k: Option<usize>,
    /// Informed trigger signal: promise, mismatch or qvar.
    #[arg(long)]
    informed_signal: Option<String>,
    /// Share novelty counts across seeds.
    #[arg(long)]
    global_counts: Option<bool>,
    /// Share the meta-bandit across seeds.
    #[arg(long)]
    shared_bandit: Option<bool>,
    /// Run seeds concurrently.
    #[arg(long)]
    parallel: Option<bool>,
    /// Dump the final Q table per seed.
    #[arg(long)]
    dump_qtable: Option<bool>,
    /// Flat key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn overlay(&self) -> Result<ConfigOverlay, modeswitch::harness::ExperimentError> {
        let file = match &self.config {
            Some(path) => ConfigOverlay::from_file(path)?,
            None => ConfigOverlay::new(),
        };
        let mut cli = ConfigOverlay::new();
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                cli.set(key, v);
            }
        };
        set("variant", self.variant.clone());
        set("env", self.env.clone());
        set("episodes", self.episodes.map(|v| v.to_string()));
        set("seeds", self.seeds.clone());
        set("eval_every", self.eval_every.map(|v| v.to_string()));
        set("eval_episodes", self.eval_episodes.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("k", self.k.map(|v| v.to_string()));
        set("gamma", self.gamma.map(|v| v.to_string()));
        set("alpha", self.alpha.map(|v| v.to_string()));
        set("watkins_cut", self.watkins_cut.map(|v| v.to_string()));
        set("ensemble", self.ensemble.map(|v| v.to_string()));
        set("top_k", self.top_k.map(|v| v.to_string()));
        set("informed_signal", self.informed_signal.clone());
        set("global_counts", self.global_counts.map(|v| v.to_string()));
        set("shared_bandit", self.shared_bandit.map(|v| v.to_string()));
        set("parallel", self.parallel.map(|v| v.to_string()));
        set("dump_qtable", self.dump_qtable.map(|v| v.to_string()));
        Ok(file.merge(cli))
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => {
            let config = match args.overlay().and_then(|o| o.build()) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            match run_experiment(&config) {
                Ok(()) => {
                    for seed in &config.seeds {
                        println!("{}", config.out_dir.join(format!("seed_{seed}")).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Parse { variant } => match parse_variant(&variant) {
            Ok(spec) => {
                println!("{}", format_variant(&spec));
                println!("{spec:#?}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
