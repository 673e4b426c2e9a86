use std::path::Path;

use polyc_core::envs::ControlSystem;
use polyc_core::lyapunov::{Candidate, LyapunovCritic, QuadraticCandidate};
use polyc_core::nn::{GaussianPolicy, Mlp};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::write_json;

pub const BUNDLE_FORMAT: u32 = 1;

/// A Lyapunov candidate as stored in a bundle: a trained critic network or a
/// fixed quadratic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CriticModel {
    Network(LyapunovCritic),
    Quadratic { quadratic: QuadraticCandidate },
}

impl CriticModel {
    pub fn kind(&self) -> &'static str {
        match self {
            CriticModel::Network(_) => "network",
            CriticModel::Quadratic { .. } => "quadratic",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CriticModel::Network(c) => c.net.input_dim(),
            CriticModel::Quadratic { quadratic } => quadratic.dim(),
        }
    }
}

impl Candidate for CriticModel {
    fn value(&self, x: &[f64]) -> polyc_core::Result<f64> {
        match self {
            CriticModel::Network(c) => c.value(x),
            CriticModel::Quadratic { quadratic } => quadratic.value(x),
        }
    }
}

/// Everything needed to resume evaluation or certification of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub format: u32,
    pub config: RunConfig,
    pub policy: GaussianPolicy,
    pub value_net: Mlp,
    pub critic: CriticModel,
    pub iter: usize,
    pub seed: u64,
}

impl Bundle {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let bundle: Bundle = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid checkpoint {}: {e}", path.display())))?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(CliError::usage(format!(
                "checkpoint {} has format {}, expected {BUNDLE_FORMAT}",
                path.display(),
                bundle.format
            )));
        }
        bundle.config.validate()?;
        bundle.check_env(bundle.build_env()?.as_ref())?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        Ok(write_json(path, self)?)
    }

    pub fn build_env(&self) -> CliResult<Box<dyn ControlSystem>> {
        Ok(self.config.env.build()?)
    }

    /// Fails unless the networks fit `env`'s state and action dimensions.
    pub fn check_env(&self, env: &dyn ControlSystem) -> CliResult<()> {
        let spec = env.spec();
        let checks = [
            ("policy input", self.policy.state_dim(), spec.state_dim),
            ("policy output", self.policy.action_dim(), spec.action_dim),
            ("value network input", self.value_net.input_dim(), spec.state_dim),
            ("critic input", self.critic.input_dim(), spec.state_dim),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(CliError::usage(format!(
                    "checkpoint is incompatible with environment {}: {what} has dimension {got}, expected {expected}",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}
