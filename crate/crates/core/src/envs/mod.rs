//! Controlled dynamical systems used for training and certification.
//!
//! Each system is a pure function of `(clock, state, control)`; the only
//! per-episode bookkeeping is the [`EpisodeClock`] that travels with the state.
//! Policies act in an action space that [`ControlSystem::control`] maps onto
//! the physical control (an affine map for the quadrotor, a clamp otherwise).

mod config;
mod linear;
mod path_tracking;
mod pendulum;
mod quadrotor;

pub use config::{EnvConfig, LinearParams, PathTrackingParams, PendulumParams, QuadrotorParams};
pub use linear::LinearSystem;
pub use path_tracking::{Path, PathKind, PathSegment, PathTracking};
pub use pendulum::{wrap_angle, Pendulum};
pub use quadrotor::Quadrotor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width, half_width)
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Static description of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub dt: f64,
    pub domain: Vec<Interval>,
    /// Bounds of the physical control.
    pub action_bounds: Vec<Interval>,
    pub equilibrium: Vec<f64>,
    /// Policy-space action that holds the equilibrium.
    pub equilibrium_action: Vec<f64>,
    pub horizon: usize,
    pub init_region: Vec<Interval>,
}

impl EnvSpec {
    pub fn in_domain(&self, s: &[f64]) -> bool {
        s.iter().zip(&self.domain).all(|(x, d)| d.contains(*x))
    }
}

/// Episode-local context: elapsed steps and, for path following, arc length travelled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeClock {
    pub step: usize,
    pub arc_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub clock: EpisodeClock,
    /// The episode ended because a guard fired (singularity, gimbal lock, domain exit).
    pub terminated: bool,
    /// The pendulum angle crossed the ±π seam during this step.
    pub wrapped: bool,
}

/// One recorded interaction `(s, a, r, s', dt, done)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    /// Action as produced by the policy, before mapping to the physical control.
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub dt: f64,
    pub done: bool,
    /// Clock at `s`, so the successor can be recomputed under another action.
    pub clock: EpisodeClock,
}

pub trait ControlSystem: Send + Sync + std::fmt::Debug {
    fn spec(&self) -> &EnvSpec;

    /// Maps a policy action to the physical control.
    fn control(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.spec().action_bounds)
            .map(|(a, b)| b.clamp(*a))
            .collect()
    }

    /// Advances the system by one `dt` under a physical control.
    fn step(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> Result<StepOutcome>;

    fn reward(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> f64;

    /// Uniform draw from the initialization box.
    fn reset(&self, rng: &mut dyn rand::RngCore) -> (Vec<f64>, EpisodeClock) {
        let state = self.spec().init_region.iter().map(|i| i.sample(rng)).collect();
        (state, EpisodeClock::default())
    }

    /// Scalar error reported as the tracking metric during evaluation.
    fn tracking_error(&self, state: &[f64]) -> f64 {
        state
            .iter()
            .zip(&self.spec().equilibrium)
            .map(|(x, e)| (x - e).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Step from a policy action: control mapping, dynamics, and reward.
    ///
    /// When a guard terminates the episode, the reward additionally charges the
    /// current per-step cost for every remaining step of the horizon, so that
    /// ending an episode early is never cheaper than continuing it.
    fn act(&self, clock: &EpisodeClock, state: &[f64], action: &[f64]) -> Result<(StepOutcome, f64)> {
        let u = self.control(action);
        let mut reward = self.reward(clock, state, &u);
        let outcome = self.step(clock, state, &u)?;
        if outcome.terminated {
            let remaining = self.spec().horizon.saturating_sub(clock.step + 1) as f64;
            reward += remaining * reward.min(0.0);
        }
        Ok((outcome, reward))
    }
}

/// Classic fourth-order Runge-Kutta step for `x' = f(x)`.
pub(crate) fn rk4<F>(x: &[f64], dt: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let axpy = |k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + h * ki).collect() };
    let k1 = f(x);
    let k2 = f(&axpy(&k1, 0.5 * dt));
    let k3 = f(&axpy(&k2, 0.5 * dt));
    let k4 = f(&axpy(&k3, dt));
    (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
