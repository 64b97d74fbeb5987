//! Browser bindings for the mode-switching playground.
//!
//! Three operations back the static page in `www/`:
//!
//! - [`homeostasis_trace`]: feed a synthetic signal stream through the
//!   adaptive-threshold switch and return the signal, switch probabilities and
//!   switch events, bucketed for plotting.
//! - [`run_variant`]: train an agent with one behaviour variant and return its
//!   learning curve, exploration statistics and per-episode mode ribbons.
//! - [`check_variant`]: validate a variant string and echo its canonical form
//!   (plus [`presets`] for the dropdown).
//!
//! Everything returns JSON strings so the page needs no extra glue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use modeswitch::harness::{run_seed, ConfigOverlay};

type StreamFn = Box<dyn FnMut(u32, &mut ChaCha8Rng) -> f64>;
use modeswitch::stats::{periods, ExplorationStats};
use modeswitch::switching::{homeostasis_step, HomeostasisState};
use modeswitch::varspec::{format_variant, parse_variant};

#[derive(Serialize)]
struct ErrorOut {
    error: String,
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable output")
}

fn error_json(message: impl std::fmt::Display) -> String {
    json(&ErrorOut {
        error: message.to_string(),
    })
}

#[derive(Serialize)]
struct HomeostasisOut {
    target_rate: f64,
    empirical_rate: f64,
    steps: u32,
    /// Bucketed plot data: per bucket the mean signal, mean switch
    /// probability and number of switches.
    bucket_size: u32,
    signal: Vec<f64>,
    prob: Vec<f64>,
    switches: Vec<u32>,
}

/// Runs the adaptive-threshold switch on a synthetic stream.
///
/// `stream` is one of `constant`, `gaussian`, `sinusoid`.
#[wasm_bindgen]
pub fn homeostasis_trace(rate: f64, stream: &str, steps: u32, seed: u64) -> String {
    if !(rate > 0.0 && rate <= 1.0) {
        return error_json("target rate must be in (0, 1]");
    }
    let steps = steps.clamp(100, 2_000_000);
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
    let mut bernoulli = ChaCha8Rng::seed_from_u64(seed);
    let mut gen: StreamFn = match stream {
        "constant" => Box::new(|_, _: &mut ChaCha8Rng| 7.0),
        "gaussian" => Box::new(|_, rng: &mut ChaCha8Rng| gaussian(rng)),
        "sinusoid" => Box::new(move |t, rng: &mut ChaCha8Rng| {
            (t as f64 * std::f64::consts::TAU / (steps as f64 / 4.0)).sin() + 0.2 * gaussian(rng)
        }),
        other => return error_json(format!("unknown stream `{other}`")),
    };

    let buckets = 600u32.min(steps);
    let bucket_size = steps.div_ceil(buckets);
    let mut out = HomeostasisOut {
        target_rate: rate,
        empirical_rate: 0.0,
        steps,
        bucket_size,
        signal: Vec::new(),
        prob: Vec::new(),
        switches: Vec::new(),
    };
    let mut h = HomeostasisState::default();
    let mut total_switches = 0u32;
    let (mut acc_x, mut acc_p, mut acc_s, mut in_bucket) = (0.0, 0.0, 0u32, 0u32);
    for t in 0..steps {
        let x = gen(t, &mut noise);
        let switched = homeostasis_step(&mut h, x, rate, &mut bernoulli);
        // Recompute the step's switch probability from the updated moments.
        let x_plus = ((x - h.mean) / h.var.sqrt().max(1e-6)).exp();
        let p = (rate * x_plus / h.exp_mean).min(1.0);
        acc_x += x;
        acc_p += p;
        acc_s += u32::from(switched);
        total_switches += u32::from(switched);
        in_bucket += 1;
        if in_bucket == bucket_size || t + 1 == steps {
            out.signal.push(acc_x / in_bucket as f64);
            out.prob.push(acc_p / in_bucket as f64);
            out.switches.push(acc_s);
            acc_x = 0.0;
            acc_p = 0.0;
            acc_s = 0;
            in_bucket = 0;
        }
    }
    out.empirical_rate = total_switches as f64 / steps as f64;
    json(&out)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Serialize)]
struct RibbonPeriod {
    mode: char,
    len: u32,
}

#[derive(Serialize)]
struct Ribbon {
    episode: u32,
    len: u32,
    ret: f64,
    periods: Vec<RibbonPeriod>,
}

#[derive(Serialize)]
struct CurvePoint {
    episode: u32,
    normalized: f64,
}

#[derive(Serialize)]
struct RunOut {
    variant: String,
    env: String,
    episodes: u32,
    p_x: f64,
    med_x: Option<f64>,
    rmed_x: Option<f64>,
    final_normalized: f64,
    best_normalized: f64,
    curve: Vec<CurvePoint>,
    ribbons: Vec<Ribbon>,
}

/// Trains one agent and reports its learning curve, exploration statistics
/// and the mode ribbons of the most recent episodes.
#[wasm_bindgen]
pub fn run_variant(
    variant: &str,
    env_kind: &str,
    size: u32,
    episodes: u32,
    seed: u64,
    ribbon_count: u32,
) -> String {
    let episodes = episodes.clamp(1, 20_000);
    let env = match env_kind {
        "deepsea" => format!("deepsea:{size}"),
        "chain" => format!("chain:{size}"),
        other => return error_json(format!("unknown environment `{other}`")),
    };
    let mut overlay = ConfigOverlay::new();
    overlay.set("variant", variant);
    overlay.set("env", &env);
    overlay.set("episodes", episodes.to_string());
    overlay.set("seeds", seed.to_string());
    overlay.set("eval_every", episodes.div_ceil(60).max(1).to_string());
    overlay.set("out", "unused");
    let config = match overlay.build() {
        Ok(c) => c,
        Err(e) => return error_json(e),
    };
    let run = match run_seed(&config, seed) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };

    let stats = ExplorationStats::compute(&run.traces);
    let ribbons: Vec<Ribbon> = run
        .traces
        .iter()
        .enumerate()
        .rev()
        .take(ribbon_count.clamp(1, 60) as usize)
        .map(|(i, trace)| Ribbon {
            episode: i as u32,
            len: trace.len() as u32,
            ret: trace.episode_return,
            periods: periods(trace)
                .into_iter()
                .map(|(mode, len)| RibbonPeriod {
                    mode: mode.letter(),
                    len: len as u32,
                })
                .collect(),
        })
        .collect();

    let curve: Vec<CurvePoint> = run
        .evals
        .iter()
        .map(|p| CurvePoint {
            episode: p.episode,
            normalized: p.normalized_return,
        })
        .collect();
    let out = RunOut {
        variant: format_variant(&config.variant),
        env,
        episodes,
        p_x: stats.p_x,
        med_x: stats.med_x,
        rmed_x: stats.rmed_x,
        final_normalized: curve.last().map_or(0.0, |p| p.normalized),
        best_normalized: curve.iter().map(|p| p.normalized).fold(0.0, f64::max),
        curve,
        ribbons,
    };
    json(&out)
}

#[derive(Serialize)]
struct CheckOut {
    ok: bool,
    canonical: Option<String>,
    error: Option<String>,
}

/// Validates a variant string; returns its canonical form or the parse error.
#[wasm_bindgen]
pub fn check_variant(text: &str) -> String {
    match parse_variant(text) {
        Ok(spec) => json(&CheckOut {
            ok: true,
            canonical: Some(format_variant(&spec)),
            error: None,
        }),
        Err(e) => json(&CheckOut {
            ok: false,
            canonical: None,
            error: Some(e.to_string()),
        }),
    }
}

/// A small set of representative variant strings for the page's dropdown.
#[wasm_bindgen]
pub fn presets() -> String {
    json(&[
        "XU-experiment-level-G",
        "XU-experiment-level-X",
        "XU-step-level-0.01",
        "XU-episode-level-*",
        "XU-intra(10,blind,n100,G)",
        "XU-intra(100,blind,n10,X)",
        "XU-intra(*,blind,p*,G)",
        "XU-intra(10,informed,p0.01,G)",
        "XU-intra(=,informed,p0.1,X)",
        "XI-intra(10,blind,n100,X)",
        "XS-intra(10,blind,n100,G)",
    ])
}
