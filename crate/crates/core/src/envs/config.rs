use serde::{Deserialize, Serialize};

use super::{ControlSystem, Interval, LinearSystem, PathKind, PathTracking, Pendulum, Quadrotor};
use crate::error::{Error, Result};

/// Environment block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    Pendulum(PendulumParams),
    PathTracking(PathTrackingParams),
    Quadrotor(QuadrotorParams),
    Linear(LinearParams),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn ControlSystem>> {
        Ok(match self {
            EnvConfig::Pendulum(p) => Box::new(Pendulum::new(p.clone())?),
            EnvConfig::PathTracking(p) => Box::new(PathTracking::new(p.clone())?),
            EnvConfig::Quadrotor(p) => Box::new(Quadrotor::new(p.clone())?),
            EnvConfig::Linear(p) => Box::new(LinearSystem::new(p.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Pendulum(_) => "pendulum",
            EnvConfig::PathTracking(_) => "path_tracking",
            EnvConfig::Quadrotor(_) => "quadrotor",
            EnvConfig::Linear(_) => "linear",
        }
    }
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn check_region(name: &str, region: &[Interval], dim: usize) -> Result<()> {
    if region.len() != dim {
        return Err(Error::Config(format!(
            "{name} needs {dim} intervals, got {}",
            region.len()
        )));
    }
    if region.iter().any(|i| !(i.lo <= i.hi) || !i.lo.is_finite() || !i.hi.is_finite()) {
        return Err(Error::Config(format!("{name} has an empty or non-finite interval")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub dt: f64,
    pub horizon: usize,
    pub init_region: Vec<Interval>,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            dt: 0.05,
            horizon: 200,
            init_region: vec![
                Interval::symmetric(std::f64::consts::PI),
                Interval::symmetric(1.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathTrackingParams {
    pub wheelbase: f64,
    pub dt: f64,
    pub horizon: usize,
    pub max_accel: f64,
    pub max_steer: f64,
    /// Episode terminates once `|d_e|` exceeds this.
    pub max_offset: f64,
    pub path: PathKind,
    /// State order: `d_e, theta_e, v, v_target`.
    pub init_region: Vec<Interval>,
}

impl Default for PathTrackingParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            dt: 0.02,
            horizon: 400,
            max_accel: 2.0,
            max_steer: 0.6,
            max_offset: 5.0,
            path: PathKind::Training,
            init_region: vec![
                Interval::symmetric(1.0),
                Interval::symmetric(0.5),
                Interval::new(1.5, 2.5),
                Interval::point(2.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub arm: f64,
    pub k_thrust: f64,
    pub k_moment: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub gravity: f64,
    pub dt: f64,
    pub horizon: usize,
    pub max_rotor_speed: f64,
    /// Rotor-speed change per unit of policy action around hover.
    pub action_scale: f64,
    /// Episode terminates once the position error norm exceeds this.
    pub max_position_error: f64,
    pub init_region: Vec<Interval>,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        let mut init_region = vec![Interval::point(0.0); 12];
        for i in init_region.iter_mut().take(3) {
            *i = Interval::symmetric(0.5);
        }
        for i in init_region.iter_mut().skip(6).take(3) {
            *i = Interval::symmetric(0.1);
        }
        Self {
            mass: 0.5,
            arm: 0.17,
            k_thrust: 3e-6,
            k_moment: 1.1e-7,
            ixx: 3.2e-3,
            iyy: 3.2e-3,
            izz: 5.5e-3,
            gravity: 9.81,
            dt: 0.01,
            horizon: 400,
            max_rotor_speed: 1000.0,
            action_scale: 100.0,
            max_position_error: 5.0,
            init_region,
        }
    }
}

/// `x' = A x + B u`, used for analytic fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub dt: f64,
    pub horizon: usize,
    pub domain: Vec<Interval>,
    pub action_bounds: Vec<Interval>,
    pub init_region: Vec<Interval>,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            a: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            dt: 0.01,
            horizon: 200,
            domain: vec![Interval::symmetric(1.0); 2],
            action_bounds: vec![Interval::symmetric(1.0); 2],
            init_region: vec![Interval::symmetric(1.0); 2],
        }
    }
}
