use std::path::{Path, PathBuf};

use polyc_core::envs::{EnvConfig, EnvSpec, Interval};
use polyc_core::lyapunov::CriticConfig;
use polyc_core::policy_opt::PolycConfig;
use polyc_core::validator::CertifyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Complete description of a run. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Iterations between checkpoints; 0 writes only the final bundle.
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: usize,
    pub env: EnvConfig,
    #[serde(default)]
    pub algo: PolycConfig,
    #[serde(default)]
    pub critic: CriticConfig,
    #[serde(default)]
    pub validator: ValidatorSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_checkpoint_interval() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ValidatorMode {
    /// Full ε-net over the certification box.
    #[default]
    Grid,
    /// Grid over the plane dimensions with every other dimension fixed.
    Slice,
    /// Uniform sampling inside the best slice band.
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidatorSettings {
    pub a_const: f64,
    pub epsilon_volume: Option<f64>,
    pub margin: Option<f64>,
    pub grid_budget: usize,
    pub min_cells_per_dim: usize,
    pub lipschitz_samples: usize,
    pub relax_margin: bool,
    pub mode: ValidatorMode,
    /// Certification box; the environment's initialization box when absent.
    pub region: Option<Vec<Interval>>,
    /// Dimensions spanned by slices and landscape maps.
    pub plane: [usize; 2],
    /// Values of the non-plane dimensions in slices; the equilibrium when absent.
    pub slice_point: Option<Vec<f64>>,
    pub mc_samples: usize,
    pub landscape_cells: usize,
    /// Arc length at which path-following steps are taken.
    pub arc_length: f64,
}

impl Default for ValidatorSettings {
    fn default() -> Self {
        let c = CertifyConfig::default();
        Self {
            a_const: c.a_const,
            epsilon_volume: c.epsilon_volume,
            margin: c.margin,
            grid_budget: c.grid_budget,
            min_cells_per_dim: c.min_cells_per_dim,
            lipschitz_samples: c.lipschitz_samples,
            relax_margin: c.relax_margin,
            mode: ValidatorMode::Grid,
            region: None,
            plane: [0, 1],
            slice_point: None,
            mc_samples: 10_000,
            landscape_cells: 100,
            arc_length: 0.0,
        }
    }
}

impl ValidatorSettings {
    pub fn certify_config(&self, seed: u64) -> CertifyConfig {
        CertifyConfig {
            a_const: self.a_const,
            epsilon_volume: self.epsilon_volume,
            margin: self.margin,
            grid_budget: self.grid_budget,
            min_cells_per_dim: self.min_cells_per_dim,
            lipschitz_samples: self.lipschitz_samples,
            relax_margin: self.relax_margin,
            seed,
        }
    }

    pub fn region(&self, spec: &EnvSpec) -> Vec<Interval> {
        self.region.clone().unwrap_or_else(|| spec.init_region.clone())
    }

    pub fn slice_point(&self, spec: &EnvSpec) -> Vec<f64> {
        self.slice_point.clone().unwrap_or_else(|| spec.equilibrium.clone())
    }

    /// Checks that do not depend on the environment.
    pub fn validate(&self) -> CliResult<()> {
        self.certify_config(0).validate()?;
        if self.plane[0] == self.plane[1] {
            return Err(CliError::usage(format!("validator plane needs two distinct dimensions, got {:?}", self.plane)));
        }
        if self.mc_samples < 1000 {
            return Err(CliError::usage("validator mc_samples must be at least 1000"));
        }
        if self.landscape_cells < 2 {
            return Err(CliError::usage("validator landscape_cells must be at least 2"));
        }
        if !self.arc_length.is_finite() || self.arc_length < 0.0 {
            return Err(CliError::usage("validator arc_length must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Checks against the environment the settings are applied to.
    pub fn validate_for(&self, spec: &EnvSpec) -> CliResult<()> {
        self.validate()?;
        let n = spec.state_dim;
        let region = self.region(spec);
        if region.len() != n {
            return Err(CliError::usage(format!("validator region needs {n} intervals, got {}", region.len())));
        }
        for (d, (r, dom)) in region.iter().zip(&spec.domain).enumerate() {
            if !(r.lo <= r.hi) || r.lo < dom.lo || r.hi > dom.hi {
                return Err(CliError::usage(format!(
                    "validator region [{}, {}] in dimension {d} is not inside the domain [{}, {}]",
                    r.lo, r.hi, dom.lo, dom.hi
                )));
            }
        }
        if self.plane.iter().any(|&d| d >= n) {
            return Err(CliError::usage(format!("validator plane {:?} out of range for state dimension {n}", self.plane)));
        }
        if self.slice_point(spec).len() != n {
            return Err(CliError::usage(format!("validator slice_point needs {n} values")));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.algo.validate()?;
        self.critic.validate()?;
        if self.algo.steps_per_iter < self.critic.batch_size {
            return Err(CliError::usage(format!(
                "algo.steps_per_iter ({}) must be at least critic.batch_size ({})",
                self.algo.steps_per_iter, self.critic.batch_size
            )));
        }
        let env = self.env.build()?;
        self.validator.validate_for(env.spec())
    }
}

/// Parses `"lo:hi,lo:hi,x"` into intervals; a bare number is a point.
pub fn parse_region(text: &str) -> CliResult<Vec<Interval>> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("invalid number {s:?} in region {text:?}")))
            };
            let interval = match part.split_once(':') {
                Some((lo, hi)) => Interval::new(num(lo)?, num(hi)?),
                None => Interval::point(num(part)?),
            };
            if !(interval.lo <= interval.hi) || !interval.lo.is_finite() || !interval.hi.is_finite() {
                return Err(CliError::usage(format!("empty or non-finite interval {part:?}")));
            }
            Ok(interval)
        })
        .collect()
}

/// Parses `"d0,d1"`.
pub fn parse_plane(text: &str) -> CliResult<[usize; 2]> {
    let dims: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("plane must be two dimension indices like \"0,1\", got {text:?}")))?;
    match dims[..] {
        [a, b] if a != b => Ok([a, b]),
        _ => Err(CliError::usage(format!("plane must name two distinct dimensions, got {text:?}"))),
    }
}
