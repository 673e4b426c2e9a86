use std::fmt::Write as _;
use std::path::PathBuf;

use polyc_core::envs::{ControlSystem, EnvConfig, EpisodeClock, Interval};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sibling_dir, TOOL_VERSION};
use crate::bundle::Bundle;
use crate::config::parse_region;
use crate::error::{CliError, CliResult};
use crate::io::{write_atomic, write_json};

#[derive(Debug, Clone, clap::Args)]
pub struct EvalArgs {
    /// Checkpoint bundle (JSON).
    #[arg(short = 'k', long)]
    pub checkpoint: PathBuf,
    /// Number of episodes.
    #[arg(short = 'n', long, default_value_t = 20)]
    pub episodes: usize,
    /// Initial-state box as `lo:hi,lo:hi,...` (a bare number fixes a dimension).
    /// Defaults to the environment's initialization box.
    #[arg(long)]
    pub init: Option<String>,
    /// Distance to the equilibrium that counts as stabilized.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    /// Episode length; defaults to the environment horizon.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed for the initial states; defaults to the bundle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with an `[env]` table replacing the bundle's environment
    /// parameters (the environment kind must match).
    #[arg(long)]
    pub env_config: Option<PathBuf>,
    /// Output directory; defaults to `eval/` next to the checkpoint.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub index: usize,
    pub initial_state: Vec<f64>,
    pub steps: usize,
    pub stabilized: bool,
    /// First step after which the state was within the threshold.
    pub first_stabilized_step: Option<usize>,
    pub wrap_events: usize,
    pub terminated: bool,
    pub tracking_rms: f64,
    #[serde(rename = "return")]
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub tool_version: String,
    pub env: String,
    pub episodes: usize,
    pub steps: usize,
    pub threshold: f64,
    pub init_region: Vec<Interval>,
    pub seed: u64,
    pub stabilized_fraction: f64,
    pub wrap_events: usize,
    pub episodes_with_wraps: usize,
    /// Root mean square of the tracking error over every evaluated step.
    pub tracking_rms: f64,
    pub mean_return: f64,
    pub per_episode: Vec<EpisodeSummary>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvOverride {
    env: EnvConfig,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Deterministic (mean-action) rollout; returns the summary and the trajectory CSV.
pub(crate) fn rollout(
    env: &dyn ControlSystem,
    bundle: &Bundle,
    index: usize,
    initial: Vec<f64>,
    steps: usize,
    threshold: f64,
) -> CliResult<(EpisodeSummary, String)> {
    let spec = env.spec();
    let (n, m) = (spec.state_dim, spec.action_dim);
    let mut csv = String::from("t");
    (0..n).for_each(|i| {
        let _ = write!(csv, ",s_{i}");
    });
    (0..m).for_each(|i| {
        let _ = write!(csv, ",a_{i}");
    });
    csv.push_str(",r\n");

    let mut clock = EpisodeClock::default();
    let mut state = initial.clone();
    let mut first_stabilized_step = None;
    let (mut wraps, mut sq_err, mut ret, mut taken, mut terminated) = (0, 0.0, 0.0, 0, false);
    if distance(&state, &spec.equilibrium) < threshold {
        first_stabilized_step = Some(0);
    }
    for step in 0..steps {
        let action = bundle.policy.mean(&state).map_err(|e| CliError::Runtime(e.into()))?;
        let (outcome, reward) = env.act(&clock, &state, &action).map_err(|e| CliError::Runtime(e.into()))?;
        let _ = write!(csv, "{}", step as f64 * spec.dt);
        for v in state.iter().chain(&action) {
            let _ = write!(csv, ",{v}");
        }
        let _ = writeln!(csv, ",{reward}");
        let err = env.tracking_error(&state);
        sq_err += err * err;
        ret += reward;
        taken += 1;
        wraps += usize::from(outcome.wrapped);
        state = outcome.state;
        clock = outcome.clock;
        if first_stabilized_step.is_none() && distance(&state, &spec.equilibrium) < threshold {
            first_stabilized_step = Some(step + 1);
        }
        if outcome.terminated {
            terminated = true;
            break;
        }
    }
    let summary = EpisodeSummary {
        index,
        initial_state: initial,
        steps: taken,
        stabilized: first_stabilized_step.is_some() && wraps == 0 && !terminated,
        first_stabilized_step,
        wrap_events: wraps,
        terminated,
        tracking_rms: (sq_err / taken.max(1) as f64).sqrt(),
        episode_return: ret,
    };
    Ok((summary, csv))
}

/// Evaluates a checkpoint with noise-free actions. Writes one trajectory CSV
/// per episode and `summary.json`.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalSummary> {
    let mut bundle = Bundle::load(&args.checkpoint)?;
    if let Some(path) = &args.env_config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read environment override {}: {e}", path.display())))?;
        let over: EnvOverride = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid environment override {}: {e}", path.display())))?;
        if over.env.name() != bundle.config.env.name() {
            return Err(CliError::usage(format!(
                "environment override is {} but the checkpoint was trained on {}",
                over.env.name(),
                bundle.config.env.name()
            )));
        }
        bundle.config.env = over.env;
    }
    let env = bundle.build_env()?;
    bundle.check_env(env.as_ref())?;
    let spec = env.spec();
    if args.episodes == 0 {
        return Err(CliError::usage("need at least one episode"));
    }
    if !(args.threshold > 0.0) {
        return Err(CliError::usage("threshold must be positive"));
    }
    let init_region = match &args.init {
        Some(text) => parse_region(text)?,
        None => spec.init_region.clone(),
    };
    if init_region.len() != spec.state_dim {
        return Err(CliError::usage(format!(
            "initial box needs {} intervals, got {}",
            spec.state_dim,
            init_region.len()
        )));
    }
    let steps = args.steps.unwrap_or(spec.horizon);
    let seed = args.seed.unwrap_or(bundle.seed);
    let out = args.output.clone().unwrap_or_else(|| sibling_dir(&args.checkpoint, "eval"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_episode = Vec::with_capacity(args.episodes);
    let mut total_sq = 0.0;
    let mut total_steps = 0;
    for index in 0..args.episodes {
        let initial: Vec<f64> = init_region.iter().map(|i| i.sample(&mut rng)).collect();
        let (summary, csv) = rollout(env.as_ref(), &bundle, index, initial, steps, args.threshold)?;
        write_atomic(&out.join("trajectories").join(format!("episode_{index:03}.csv")), csv.as_bytes())?;
        total_sq += summary.tracking_rms.powi(2) * summary.steps as f64;
        total_steps += summary.steps;
        per_episode.push(summary);
    }
    let n = per_episode.len() as f64;
    let summary = EvalSummary {
        tool_version: TOOL_VERSION.into(),
        env: spec.name.clone(),
        episodes: per_episode.len(),
        steps,
        threshold: args.threshold,
        init_region,
        seed,
        stabilized_fraction: per_episode.iter().filter(|e| e.stabilized).count() as f64 / n,
        wrap_events: per_episode.iter().map(|e| e.wrap_events).sum(),
        episodes_with_wraps: per_episode.iter().filter(|e| e.wrap_events > 0).count(),
        tracking_rms: (total_sq / total_steps.max(1) as f64).sqrt(),
        mean_return: per_episode.iter().map(|e| e.episode_return).sum::<f64>() / n,
        per_episode,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{} episodes: stabilized {:.3}, wraps {}, tracking rms {:.4}, mean return {:.3}",
        summary.episodes, summary.stabilized_fraction, summary.wrap_events, summary.tracking_rms, summary.mean_return
    );
    Ok(summary)
}
