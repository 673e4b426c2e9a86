use std::fmt::Write as _;
use std::path::PathBuf;

use polyc_core::policy_opt::{IterationMetrics, PolycTrainer};

use crate::bundle::{Bundle, CriticModel, BUNDLE_FORMAT};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::write_atomic;

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Suppress per-iteration lines.
    #[arg(short, long)]
    pub quiet: bool,
}

fn snapshot(trainer: &PolycTrainer, config: &RunConfig) -> Bundle {
    Bundle {
        format: BUNDLE_FORMAT,
        config: config.clone(),
        policy: trainer.policy.clone(),
        value_net: trainer.value_net.clone(),
        critic: CriticModel::Network(trainer.critic.clone()),
        iter: trainer.iteration(),
        seed: trainer.seed(),
    }
}

fn summary_line(m: &IterationMetrics) -> String {
    format!(
        "iter {:>4}  return {:>10.3}  risk {:>9.3e}  lie {:>10.3e}  clip {:.3}  beta {:.3}  entropy {:.3}",
        m.iter, m.mean_return, m.lyapunov_risk, m.mean_lie, m.clip_frac, m.beta, m.entropy
    )
}

/// Trains from a configuration file. Writes `metrics.csv` after every
/// iteration, `checkpoints/iter_NNNN.json` every `checkpoint_interval`
/// iterations and `bundle.json` at the end. Returns the final bundle path.
pub fn cmd_train(args: &TrainArgs) -> CliResult<PathBuf> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(out) = &args.output {
        config.output_dir = out.clone();
    }
    let out = config.output_dir.clone();
    let env = config.env.build()?;
    let mut trainer = PolycTrainer::new(env, config.algo.clone(), config.critic.clone(), config.seed)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "{}", IterationMetrics::CSV_HEADER);
    write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
    for _ in 0..config.algo.total_iters {
        let metrics = trainer.iterate().map_err(|e| CliError::Runtime(e.into()))?;
        let _ = writeln!(csv, "{}", metrics.csv_row());
        write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
        if !args.quiet {
            println!("{}", summary_line(&metrics));
        }
        if config.checkpoint_interval > 0 && metrics.iter % config.checkpoint_interval == 0 {
            let path = out.join("checkpoints").join(format!("iter_{:04}.json", metrics.iter));
            snapshot(&trainer, &config).save(&path)?;
        }
    }
    let path = out.join("bundle.json");
    snapshot(&trainer, &config).save(&path)?;
    if !args.quiet {
        println!("wrote {}", path.display());
    }
    Ok(path)
}
