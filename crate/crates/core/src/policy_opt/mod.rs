//! Policy optimization with a Lyapunov-blended advantage.
//!
//! Each outer iteration collects on-policy rollouts, fits the Lyapunov critic
//! on them, estimates reward advantages with GAE, blends in the negative part
//! of the sampled Lie derivative, and takes clipped-surrogate policy steps
//! followed by reward-value regression.

mod buffer;
mod trainer;
mod update;

pub use buffer::{collect_rollouts, compute_advantages, TrajectoryBuffer};
pub use trainer::{polyc_train, IterationMetrics, PolycTrainer, TrainOutcome};
pub use update::{
    policy_gradient, policy_update, value_update, PolicyDiagnostics, PolicyGradient, PolicySample, ValueUpdateConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolycConfig {
    pub gamma: f64,
    pub lambda_gae: f64,
    pub beta: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub epochs_per_iter: usize,
    pub minibatch_size: usize,
    pub steps_per_iter: usize,
    pub total_iters: usize,
    pub beta_lagrange: bool,
    pub alpha_beta: f64,
    pub normalize_advantages: bool,
    pub policy_lr: f64,
    pub value_lr: f64,
    /// Global gradient-norm cap for policy and value steps; 0 disables it.
    pub max_grad_norm: f64,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for PolycConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda_gae: 0.95,
            beta: 0.5,
            clip_eps: 0.2,
            entropy_coef: 0.0,
            epochs_per_iter: 10,
            minibatch_size: 64,
            steps_per_iter: 2048,
            total_iters: 100,
            beta_lagrange: false,
            alpha_beta: 0.01,
            normalize_advantages: true,
            policy_lr: 3e-4,
            value_lr: 3e-4,
            max_grad_norm: 0.5,
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

impl PolycConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            return fail("lambda_gae must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return fail("beta must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return fail("clip_eps must be positive");
        }
        if !(self.entropy_coef >= 0.0) || !(self.max_grad_norm >= 0.0) {
            return fail("entropy_coef and max_grad_norm must be nonnegative");
        }
        if self.epochs_per_iter == 0 || self.minibatch_size == 0 || self.steps_per_iter == 0 {
            return fail("epochs_per_iter, minibatch_size and steps_per_iter must be positive");
        }
        if !(self.alpha_beta > 0.0) {
            return fail("alpha_beta must be positive");
        }
        if !(self.policy_lr > 0.0) || !(self.value_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        Ok(())
    }
}

/// `(1 - beta) * adv + beta * min(0, -lie)`.
pub fn blended_advantage(adv: f64, lie: f64, beta: f64) -> f64 {
    (1.0 - beta) * adv + beta * (-lie).min(0.0)
}

/// `min(ratio * adv, clamp(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn ppo_clip_surrogate(ratio: f64, adv: f64, clip_eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv)
}

/// Lagrange-style step `clamp(beta - alpha * mean_lie, 0, 1)`.
pub fn beta_lagrange_update(beta: f64, mean_lie: f64, alpha_beta: f64) -> f64 {
    (beta - alpha_beta * mean_lie).clamp(0.0, 1.0)
}
