use rand::seq::SliceRandom;
use rand::Rng;

use super::{blended_advantage, ppo_clip_surrogate, PolycConfig, TrajectoryBuffer};
use crate::envs::ControlSystem;
use crate::error::{check_dim, Error, Result};
use crate::lyapunov::{mean_action_successor, Candidate};
use crate::nn::{GaussianPolicy, Mlp, Optimizer, Trace};

/// One row of a policy minibatch. `advantage` is the (blended) advantage
/// weighting this sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample<'a> {
    pub s: &'a [f64],
    pub a: &'a [f64],
    pub log_prob_old: f64,
    pub advantage: f64,
}

/// Clipped-surrogate objective of a minibatch and its gradient (ascent direction).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    /// Mean clipped surrogate, without the entropy bonus.
    pub surrogate: f64,
    pub grad_net: Vec<f64>,
    pub grad_log_std: Vec<f64>,
    pub mean_ratio: f64,
    pub clip_frac: f64,
}

/// Mean of `min(r A, clip(r) A)` plus `entropy_coef * H(pi)`, differentiated
/// with respect to the mean-network parameters and `log_std`.
pub fn policy_gradient(
    policy: &GaussianPolicy,
    samples: &[PolicySample<'_>],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<PolicyGradient> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch("policy gradient"));
    }
    let n = samples.len() as f64;
    let mut grad_net = vec![0.0; policy.mean_net.num_params()];
    let mut grad_log_std = vec![entropy_coef; policy.action_dim()];
    let mut trace = Trace::default();
    let (mut surrogate, mut ratio_sum, mut clipped) = (0.0, 0.0, 0usize);
    for sample in samples {
        policy.mean_net.forward_into(sample.s, &mut trace)?;
        let log_prob = policy.log_prob_given_mean(trace.output(), sample.a)?;
        let ratio = (log_prob - sample.log_prob_old).exp();
        let term = ppo_clip_surrogate(ratio, sample.advantage, clip_eps);
        surrogate += term;
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > clip_eps {
            clipped += 1;
        }
        // The unclipped branch is active exactly when it attains the minimum;
        // d(r A)/d(log pi) = r A.
        if ratio * sample.advantage <= term {
            policy.accumulate_log_prob_grad(&trace, sample.a, ratio * sample.advantage / n, &mut grad_net, &mut grad_log_std)?;
        }
    }
    Ok(PolicyGradient {
        surrogate: surrogate / n,
        grad_net,
        grad_log_std,
        mean_ratio: ratio_sum / n,
        clip_frac: clipped as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyDiagnostics {
    pub mean_ratio: f64,
    pub clip_frac: f64,
    pub mean_lie: f64,
    pub surrogate: f64,
    pub entropy: f64,
}

fn scale_to_norm(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= k);
    }
}

/// Runs `epoch` up to twice: a non-finite failure restores the state and the
/// optimizer, halves the learning rate (while `halvings_left > 0`) and retries.
fn with_retry<S: Clone, T>(
    state: &mut S,
    opt: &mut Optimizer,
    halvings_left: &mut usize,
    mut epoch: impl FnMut(&mut S, &mut Optimizer) -> Result<T>,
) -> Result<T> {
    loop {
        let saved = (state.clone(), opt.clone());
        match epoch(state, opt) {
            Ok(v) => return Ok(v),
            Err(e) => {
                (*state, *opt) = saved;
                if !matches!(e, Error::NonFinite(_)) || *halvings_left == 0 {
                    return Err(e);
                }
                *halvings_left -= 1;
                let lr = opt.learning_rate();
                opt.set_learning_rate(0.5 * lr)?;
            }
        }
    }
}

/// Policy epochs of one outer iteration.
///
/// The Lie derivative of each sample is re-estimated at every minibatch from
/// the simulator successor under the current mean action, so the Lyapunov
/// term tracks the policy being optimized. Advantages in `buf` must already be
/// computed.
#[allow(clippy::too_many_arguments)]
pub fn policy_update<C: Candidate + ?Sized, R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    opt: &mut Optimizer,
    buf: &TrajectoryBuffer,
    critic: &C,
    env: &dyn ControlSystem,
    config: &PolycConfig,
    beta: f64,
    halvings_left: &mut usize,
    rng: &mut R,
) -> Result<PolicyDiagnostics> {
    if buf.is_empty() {
        return Err(Error::EmptyBatch("policy update"));
    }
    check_dim("advantages", buf.len(), buf.advantages.len())?;
    let critic_at_s: Vec<f64> = if beta > 0.0 {
        buf.transitions.iter().map(|t| critic.value(&t.s)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut order: Vec<usize> = (0..buf.len()).collect();
    let mut totals = PolicyDiagnostics::default();
    let mut batches = 0usize;
    let mut lie_count = 0usize;
    for _ in 0..config.epochs_per_iter {
        let (stats, nb, nl) = with_retry(policy, opt, halvings_left, |policy, opt| {
            order.shuffle(rng);
            let mut stats = PolicyDiagnostics::default();
            let (mut nb, mut nl) = (0usize, 0usize);
            for chunk in order.chunks(config.minibatch_size) {
                let mut samples = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let t = &buf.transitions[i];
                    let mut advantage = buf.advantages[i];
                    if beta > 0.0 {
                        let next = mean_action_successor(env, policy, &t.clock, &t.s)?;
                        let lie = (critic.value(&next)? - critic_at_s[i]) / t.dt;
                        if !lie.is_finite() {
                            return Err(Error::NonFinite("policy-update Lie derivative"));
                        }
                        stats.mean_lie += lie;
                        nl += 1;
                        advantage = blended_advantage(advantage, lie, beta);
                    }
                    samples.push(PolicySample {
                        s: &t.s,
                        a: &t.a,
                        log_prob_old: buf.log_prob_old[i],
                        advantage,
                    });
                }
                let g = policy_gradient(policy, &samples, config.clip_eps, config.entropy_coef)?;
                if !g.surrogate.is_finite() {
                    return Err(Error::NonFinite("policy objective"));
                }
                stats.surrogate += g.surrogate;
                stats.mean_ratio += g.mean_ratio;
                stats.clip_frac += g.clip_frac;
                nb += 1;
                let mut params: Vec<f64> = policy.mean_net.params().iter().chain(&policy.log_std).copied().collect();
                let mut descent: Vec<f64> = g.grad_net.iter().chain(&g.grad_log_std).map(|v| -v).collect();
                scale_to_norm(&mut descent, config.max_grad_norm);
                opt.step(&mut params, &descent)?;
                let split = policy.mean_net.num_params();
                policy.mean_net.params_mut().copy_from_slice(&params[..split]);
                policy.log_std.copy_from_slice(&params[split..]);
            }
            Ok((stats, nb, nl))
        })?;
        totals.surrogate += stats.surrogate;
        totals.mean_ratio += stats.mean_ratio;
        totals.clip_frac += stats.clip_frac;
        totals.mean_lie += stats.mean_lie;
        batches += nb;
        lie_count += nl;
    }
    let b = batches.max(1) as f64;
    Ok(PolicyDiagnostics {
        mean_ratio: totals.mean_ratio / b,
        clip_frac: totals.clip_frac / b,
        mean_lie: if lie_count > 0 { totals.mean_lie / lie_count as f64 } else { 0.0 },
        surrogate: totals.surrogate / b,
        entropy: policy.entropy(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueUpdateConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub max_grad_norm: f64,
}

fn value_loss_gradient(net: &Mlp, states: &[&[f64]], targets: &[f64], grad: &mut [f64]) -> Result<f64> {
    let n = states.len() as f64;
    let mut trace = Trace::default();
    let mut loss = 0.0;
    for (s, &g) in states.iter().zip(targets) {
        net.forward_into(s, &mut trace)?;
        let err = trace.output()[0] - g;
        loss += err * err;
        net.backward_accumulate(&trace, &[2.0 * err / n], grad)?;
    }
    Ok(loss / n)
}

/// Minibatch regression of `V(s_t)` onto the return targets. Returns the mean
/// squared error of the last epoch.
pub fn value_update<R: Rng + ?Sized>(
    net: &mut Mlp,
    opt: &mut Optimizer,
    states: &[&[f64]],
    targets: &[f64],
    config: ValueUpdateConfig,
    halvings_left: &mut usize,
    rng: &mut R,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyBatch("value regression"));
    }
    check_dim("value targets", states.len(), targets.len())?;
    let mut order: Vec<usize> = (0..states.len()).collect();
    let mut last = 0.0;
    for _ in 0..config.epochs {
        last = with_retry(net, opt, halvings_left, |net, opt| {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut grad = vec![0.0; net.num_params()];
            let mut batch_states = Vec::with_capacity(config.minibatch_size);
            let mut batch_targets = Vec::with_capacity(config.minibatch_size);
            for chunk in order.chunks(config.minibatch_size) {
                batch_states.clear();
                batch_targets.clear();
                for &i in chunk {
                    batch_states.push(states[i]);
                    batch_targets.push(targets[i]);
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = value_loss_gradient(net, &batch_states, &batch_targets, &mut grad)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("value loss"));
                }
                total += loss * chunk.len() as f64;
                scale_to_norm(&mut grad, config.max_grad_norm);
                opt.step(net.params_mut(), &grad)?;
            }
            Ok(total / states.len() as f64)
        })?;
    }
    Ok(last)
}
