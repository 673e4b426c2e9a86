use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    beta_lagrange_update, collect_rollouts, compute_advantages, policy_update, value_update, PolycConfig,
    ValueUpdateConfig,
};
use crate::envs::{ControlSystem, Transition};
use crate::error::{Error, Result};
use crate::lyapunov::{critic_train_step, mean_action_successor, Candidate, CriticConfig, LyapunovCritic};
use crate::nn::{GaussianPolicy, Mlp, Optimizer};

/// How many iterations' worth of transitions a persistent critic buffer keeps.
const PERSIST_ITERATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub mean_return: f64,
    pub lyapunov_risk: f64,
    pub mean_lie: f64,
    pub clip_frac: f64,
    pub beta: f64,
    pub entropy: f64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iter,mean_return,lyapunov_risk,mean_lie,clip_frac,beta,entropy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter, self.mean_return, self.lyapunov_risk, self.mean_lie, self.clip_frac, self.beta, self.entropy
        )
    }
}

/// Mean Lie derivative of `critic` over the buffer states under the policy's mean action.
pub(crate) fn mean_lie<C: Candidate + ?Sized>(
    transitions: &[Transition],
    policy: &GaussianPolicy,
    critic: &C,
    env: &dyn ControlSystem,
) -> Result<f64> {
    let mut total = 0.0;
    for t in transitions {
        let next = mean_action_successor(env, policy, &t.clock, &t.s)?;
        total += (critic.value(&next)? - critic.value(&t.s)?) / t.dt;
    }
    Ok(total / transitions.len().max(1) as f64)
}

/// Stateful training loop. Networks, optimizers, the random stream and the
/// current `beta` persist across [`PolycTrainer::iterate`] calls.
#[derive(Debug)]
pub struct PolycTrainer {
    env: Box<dyn ControlSystem>,
    config: PolycConfig,
    critic_config: CriticConfig,
    pub policy: GaussianPolicy,
    pub value_net: Mlp,
    pub critic: LyapunovCritic,
    policy_opt: Optimizer,
    value_opt: Optimizer,
    critic_opt: Optimizer,
    beta: f64,
    iter: usize,
    seed: u64,
    halvings_left: usize,
    critic_buffer: Vec<Transition>,
    rng: ChaCha8Rng,
}

impl PolycTrainer {
    pub fn new(env: Box<dyn ControlSystem>, config: PolycConfig, critic_config: CriticConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        critic_config.validate()?;
        if config.steps_per_iter < critic_config.batch_size {
            return Err(Error::Config(format!(
                "steps_per_iter ({}) must be at least the critic batch_size ({})",
                config.steps_per_iter, critic_config.batch_size
            )));
        }
        let spec = env.spec().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(spec.state_dim, spec.action_dim, &config.policy_hidden, config.activation, &mut rng)?;
        let mut value_widths = vec![spec.state_dim];
        value_widths.extend_from_slice(&config.value_hidden);
        value_widths.push(1);
        let value_net = Mlp::new(&value_widths, config.activation, &mut rng)?;
        let critic = LyapunovCritic::new(spec.equilibrium.clone(), &critic_config.hidden, critic_config.activation, &mut rng)?;
        Ok(Self {
            policy_opt: Optimizer::adam(config.policy_lr)?,
            value_opt: Optimizer::adam(config.value_lr)?,
            critic_opt: Optimizer::adam(critic_config.learning_rate)?,
            beta: config.beta,
            env,
            config,
            critic_config,
            policy,
            value_net,
            critic,
            iter: 0,
            seed,
            halvings_left: 1,
            critic_buffer: Vec::new(),
            rng,
        })
    }

    pub fn env(&self) -> &dyn ControlSystem {
        self.env.as_ref()
    }

    pub fn config(&self) -> &PolycConfig {
        &self.config
    }

    pub fn critic_config(&self) -> &CriticConfig {
        &self.critic_config
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One outer iteration: rollouts, critic fit, advantages, policy and value epochs.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let iteration = self.iter + 1;
        let abort = |e: Error| match e {
            Error::TrainingAborted { .. } => e,
            other => Error::TrainingAborted {
                iteration,
                reason: other.to_string(),
            },
        };
        let env = self.env.as_ref();
        let mut buf = collect_rollouts(env, &self.policy, &self.value_net, self.config.steps_per_iter, &mut self.rng)
            .map_err(abort)?;

        let critic_data: &[Transition] = if self.critic_config.persist_buffer {
            self.critic_buffer.extend(buf.transitions.iter().cloned());
            let cap = PERSIST_ITERATIONS * self.config.steps_per_iter;
            if self.critic_buffer.len() > cap {
                self.critic_buffer.drain(..self.critic_buffer.len() - cap);
            }
            &self.critic_buffer
        } else {
            &buf.transitions
        };
        let risk = critic_train_step(
            &mut self.critic,
            critic_data,
            &self.policy,
            env,
            &mut self.critic_opt,
            &self.critic_config,
            &mut self.rng,
        )
        .map_err(abort)?;

        compute_advantages(&mut buf, self.config.gamma, self.config.lambda_gae, self.config.normalize_advantages)
            .map_err(abort)?;
        let diag = policy_update(
            &mut self.policy,
            &mut self.policy_opt,
            &buf,
            &self.critic,
            env,
            &self.config,
            self.beta,
            &mut self.halvings_left,
            &mut self.rng,
        )
        .map_err(abort)?;

        let states: Vec<&[f64]> = buf.transitions.iter().map(|t| t.s.as_slice()).collect();
        value_update(
            &mut self.value_net,
            &mut self.value_opt,
            &states,
            &buf.returns,
            ValueUpdateConfig {
                epochs: self.config.epochs_per_iter,
                minibatch_size: self.config.minibatch_size,
                max_grad_norm: self.config.max_grad_norm,
            },
            &mut self.halvings_left,
            &mut self.rng,
        )
        .map_err(abort)?;

        let lie = if self.beta > 0.0 {
            diag.mean_lie
        } else {
            mean_lie(&buf.transitions, &self.policy, &self.critic, env).map_err(abort)?
        };
        let beta_used = self.beta;
        if self.config.beta_lagrange {
            self.beta = beta_lagrange_update(self.beta, lie, self.config.alpha_beta);
        }
        self.iter = iteration;
        Ok(IterationMetrics {
            iter: iteration,
            mean_return: buf.mean_return(),
            lyapunov_risk: risk,
            mean_lie: lie,
            clip_frac: diag.clip_frac,
            beta: beta_used,
            entropy: self.policy.entropy(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub value_net: Mlp,
    pub critic: LyapunovCritic,
    pub metrics: Vec<IterationMetrics>,
}

/// Runs `config.total_iters` iterations from a fresh initialization.
pub fn polyc_train(env: Box<dyn ControlSystem>, config: PolycConfig, critic_config: CriticConfig, seed: u64) -> Result<TrainOutcome> {
    let total = config.total_iters;
    let mut trainer = PolycTrainer::new(env, config, critic_config, seed)?;
    let mut metrics = Vec::with_capacity(total);
    for _ in 0..total {
        metrics.push(trainer.iterate()?);
    }
    Ok(TrainOutcome {
        policy: trainer.policy,
        value_net: trainer.value_net,
        critic: trainer.critic,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{LinearParams, LinearSystem, Pendulum};
    use crate::policy_opt::collect_rollouts;

    fn small_config(iters: usize) -> (PolycConfig, CriticConfig) {
        (
            PolycConfig {
                steps_per_iter: 256,
                epochs_per_iter: 2,
                total_iters: iters,
                policy_hidden: vec![16],
                value_hidden: vec![16],
                ..Default::default()
            },
            CriticConfig {
                batch_size: 64,
                minibatches: 5,
                hidden: vec![16],
                ..Default::default()
            },
        )
    }

    #[test]
    fn zero_iterations_return_initial_networks() {
        let (cfg, ccfg) = small_config(0);
        let fresh = PolycTrainer::new(Box::new(Pendulum::default()), cfg.clone(), ccfg.clone(), 1).unwrap();
        let out = polyc_train(Box::new(Pendulum::default()), cfg, ccfg, 1).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.policy, fresh.policy);
        assert_eq!(out.critic, fresh.critic);
    }

    #[test]
    fn fixed_seed_runs_are_identical() {
        let run = || {
            let (cfg, ccfg) = small_config(2);
            polyc_train(Box::new(Pendulum::default()), cfg, ccfg, 9).unwrap()
        };
        let (a, b) = (run(), run());
        let csv = |o: &TrainOutcome| o.metrics.iter().map(|m| m.csv_row()).collect::<Vec<_>>();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.policy, b.policy);
        assert!(a.metrics.iter().all(|m| m.lyapunov_risk.is_finite() && m.mean_return.is_finite()));
    }

    #[test]
    fn lagrange_beta_moves_against_mean_lie() {
        let (mut cfg, ccfg) = small_config(1);
        cfg.beta_lagrange = true;
        cfg.alpha_beta = 0.05;
        let mut trainer = PolycTrainer::new(Box::new(Pendulum::default()), cfg, ccfg, 2).unwrap();
        let m = trainer.iterate().unwrap();
        assert_eq!(trainer.beta(), (0.5 - 0.05 * m.mean_lie).clamp(0.0, 1.0));
    }

    #[test]
    fn critic_batch_larger_than_rollout_is_rejected() {
        let (cfg, mut ccfg) = small_config(1);
        ccfg.batch_size = 1000;
        assert!(PolycTrainer::new(Box::new(Pendulum::default()), cfg, ccfg, 0).is_err());
    }

    #[test]
    fn horizon_one_episodes_and_on_policy_ratio() {
        let env = LinearSystem::new(LinearParams {
            horizon: 1,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = GaussianPolicy::new(2, 2, &[8], Default::default(), &mut rng).unwrap();
        let value = Mlp::zeros(&[2, 1], Default::default()).unwrap();
        let buf = collect_rollouts(&env, &policy, &value, 3, &mut rng).unwrap();
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.episodes().len(), 3);
        assert_eq!(buf.episode_returns.len(), 3);
        for (t, lp) in buf.transitions.iter().zip(&buf.log_prob_old) {
            assert_eq!((policy.log_prob(&t.s, &t.a).unwrap() - lp).exp(), 1.0);
        }
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        let _ = GaussianPolicy::new(2, 2, &[8], Default::default(), &mut r2).unwrap();
        assert_eq!(collect_rollouts(&env, &policy, &value, 3, &mut r2).unwrap(), buf);
    }
}
