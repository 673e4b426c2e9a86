use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{ControlSystem, Transition};
use crate::error::{Error, Result};
use crate::nn::{GaussianPolicy, Mlp};

/// On-policy experience with the per-transition caches used by the updates.
///
/// Episodes are contiguous. A transition closes its episode when `done` is set
/// (a guard fired, no bootstrap) or when `truncated` is set (horizon reached or
/// collection stopped, bootstrap from `next_values`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryBuffer {
    pub transitions: Vec<Transition>,
    pub log_prob_old: Vec<f64>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub truncated: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted return of every episode that ended inside this buffer.
    pub episode_returns: Vec<f64>,
}

impl TrajectoryBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn ends_episode(&self, i: usize) -> bool {
        self.transitions[i].done || self.truncated[i]
    }

    /// Index ranges of the episodes, in order.
    pub fn episodes(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 0..self.len() {
            if self.ends_episode(i) {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < self.len() {
            out.push(start..self.len());
        }
        out
    }

    /// Mean undiscounted return of completed episodes; falls back to the
    /// partial episodes when none completed.
    pub fn mean_return(&self) -> f64 {
        if !self.episode_returns.is_empty() {
            return self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64;
        }
        let episodes = self.episodes();
        if episodes.is_empty() {
            return 0.0;
        }
        episodes
            .iter()
            .map(|r| self.transitions[r.clone()].iter().map(|t| t.r).sum::<f64>())
            .sum::<f64>()
            / episodes.len() as f64
    }
}

/// Runs the stochastic policy for exactly `steps` transitions, resetting on
/// episode end. The last, unfinished episode is marked truncated.
pub fn collect_rollouts<R: Rng>(
    env: &dyn ControlSystem,
    policy: &GaussianPolicy,
    value_net: &Mlp,
    steps: usize,
    rng: &mut R,
) -> Result<TrajectoryBuffer> {
    let spec = env.spec();
    let horizon = spec.horizon.max(1);
    let dt = spec.dt;
    let mut buf = TrajectoryBuffer::default();
    let (mut state, mut clock) = env.reset(rng);
    let mut episode_return = 0.0;
    for k in 0..steps {
        let mu = policy.mean(&state)?;
        let action = policy.sample_given_mean(&mu, rng);
        let log_prob = policy.log_prob_given_mean(&mu, &action)?;
        let (outcome, reward) = env.act(&clock, &state, &action)?;
        episode_return += reward;
        let at_horizon = outcome.clock.step >= horizon;
        let done = outcome.terminated;
        let truncated = !done && (at_horizon || k + 1 == steps);
        buf.values.push(value_net.forward_scalar(&state)?);
        buf.next_values.push(if done { 0.0 } else { value_net.forward_scalar(&outcome.state)? });
        buf.log_prob_old.push(log_prob);
        buf.truncated.push(truncated);
        buf.transitions.push(Transition {
            s: state,
            a: action,
            r: reward,
            s_next: outcome.state.clone(),
            dt,
            done,
            clock,
        });
        if done || at_horizon {
            buf.episode_returns.push(episode_return);
            episode_return = 0.0;
            (state, clock) = env.reset(rng);
        } else {
            state = outcome.state;
            clock = outcome.clock;
        }
    }
    Ok(buf)
}

/// GAE over the buffer: `delta_t = r_t + gamma * (1 - done_t) * V(s_{t+1}) - V(s_t)`,
/// `A_t = delta_t + gamma * lambda * A_{t+1}` within an episode. With
/// `lambda = 1` this is the plain discounted sum of residuals. Return targets
/// are `A_t + V(s_t)` from the raw advantages; the stored advantages are
/// standardized when `normalize` is set.
pub fn compute_advantages(buf: &mut TrajectoryBuffer, gamma: f64, lambda: f64, normalize: bool) -> Result<()> {
    if buf.is_empty() {
        return Err(Error::EmptyBatch("advantage estimation"));
    }
    let n = buf.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let tr = &buf.transitions[t];
        let bootstrap = if tr.done { 0.0 } else { buf.next_values[t] };
        let delta = tr.r + gamma * bootstrap - buf.values[t];
        let carry = if buf.ends_episode(t) { 0.0 } else { next_adv };
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    buf.returns = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    if normalize && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantages"));
    }
    buf.advantages = adv;
    Ok(())
}
