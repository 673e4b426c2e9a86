use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, NetworkRepr, Trace};
use crate::error::{check_dim, Error, Result};

pub const INITIAL_LOG_STD: f64 = -0.5;

/// Diagonal Gaussian over actions with a state-conditioned mean and a
/// state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![state_dim];
        widths.extend_from_slice(hidden);
        widths.push(action_dim);
        Ok(Self {
            mean_net: Mlp::new(&widths, activation, rng)?,
            log_std: vec![INITIAL_LOG_STD; action_dim],
        })
    }

    pub fn from_parts(mean_net: Mlp, log_std: Vec<f64>) -> Result<Self> {
        check_dim("policy log_std", mean_net.output_dim(), log_std.len())?;
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy log_std"));
        }
        Ok(Self { mean_net, log_std })
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(s)
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let mu = self.mean(s)?;
        self.log_prob_given_mean(&mu, a)
    }

    pub fn log_prob_given_mean(&self, mu: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("policy action", self.action_dim(), a.len())?;
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        Ok(a.iter()
            .zip(mu)
            .zip(&self.log_std)
            .map(|((&ai, &mi), &ls)| {
                let z = (ai - mi) * (-ls).exp();
                -0.5 * z * z - ls - half_log_2pi
            })
            .sum())
    }

    /// `mean(s) + exp(log_std) * n`, with `n` a standard-normal draw per dimension.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mu = self.mean(s)?;
        Ok(self.sample_given_mean(&mu, rng))
    }

    pub fn sample_given_mean<R: Rng + ?Sized>(&self, mu: &[f64], rng: &mut R) -> Vec<f64> {
        mu.iter()
            .zip(&self.log_std)
            .map(|(&m, &ls)| {
                let n: f64 = rng.sample(StandardNormal);
                m + ls.exp() * n
            })
            .collect()
    }

    /// Differential entropy of the action distribution (state independent).
    pub fn entropy(&self) -> f64 {
        let per_dim = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        self.log_std.iter().map(|ls| ls + per_dim).sum()
    }

    /// Adds `scale * grad log pi(a|s)` into the mean-network and log-std gradient buffers.
    /// `trace` must come from `mean_net.forward_trace(s)`.
    pub fn accumulate_log_prob_grad(
        &self,
        trace: &Trace,
        a: &[f64],
        scale: f64,
        grad_net: &mut [f64],
        grad_log_std: &mut [f64],
    ) -> Result<()> {
        check_dim("policy action", self.action_dim(), a.len())?;
        check_dim("policy log_std gradient", self.action_dim(), grad_log_std.len())?;
        let mu = trace.output();
        let mut upstream = vec![0.0; self.action_dim()];
        for i in 0..self.action_dim() {
            let inv_var = (-2.0 * self.log_std[i]).exp();
            let diff = a[i] - mu[i];
            upstream[i] = scale * diff * inv_var;
            grad_log_std[i] += scale * (diff * diff * inv_var - 1.0);
        }
        self.mean_net.backward_accumulate(trace, &upstream, grad_net)?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}

impl From<GaussianPolicy> for NetworkRepr {
    fn from(policy: GaussianPolicy) -> Self {
        let mut repr = NetworkRepr::from(policy.mean_net);
        repr.log_std = Some(policy.log_std);
        repr
    }
}

impl TryFrom<NetworkRepr> for GaussianPolicy {
    type Error = Error;

    fn try_from(mut repr: NetworkRepr) -> Result<Self> {
        let log_std = repr
            .log_std
            .take()
            .ok_or_else(|| Error::Config("policy requires a log_std field".into()))?;
        GaussianPolicy::from_parts(repr.into_mlp()?, log_std)
    }
}
