use serde::{Deserialize, Serialize};

use super::config::{check_positive, check_region};
use super::{ControlSystem, EnvSpec, EpisodeClock, Interval, PathTrackingParams, StepOutcome};
use crate::error::{check_dim, Error, Result};

const SINGULARITY_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSegment {
    pub length: f64,
    pub curvature: f64,
}

/// Reference path as consecutive constant-curvature pieces. Past its end the
/// last segment's curvature continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Path {
    pub segments: Vec<PathSegment>,
}

impl Path {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("path needs at least one segment".into()));
        }
        if segments.iter().any(|s| !(s.length > 0.0) || !s.curvature.is_finite()) {
            return Err(Error::Config("path segments need positive length and finite curvature".into()));
        }
        Ok(Self { segments })
    }

    pub fn straight() -> Self {
        Self::new(vec![PathSegment {
            length: 1.0,
            curvature: 0.0,
        }])
        .expect("valid")
    }

    pub fn circle(curvature: f64) -> Self {
        Self::new(vec![PathSegment { length: 1.0, curvature }]).expect("valid")
    }

    /// A short straight lead-in followed by a constant left turn.
    pub fn training() -> Self {
        Self::new(vec![
            PathSegment {
                length: 5.0,
                curvature: 0.0,
            },
            PathSegment {
                length: 1000.0,
                curvature: 0.05,
            },
        ])
        .expect("valid")
    }

    /// A lead-in followed by alternating left and right arcs.
    pub fn unseen() -> Self {
        let mut segments = vec![PathSegment {
            length: 4.0,
            curvature: 0.0,
        }];
        for k in 0..40 {
            segments.push(PathSegment {
                length: 10.0,
                curvature: if k % 2 == 0 { 0.06 } else { -0.06 },
            });
        }
        Self::new(segments).expect("valid")
    }

    pub fn curvature_at(&self, arc_length: f64) -> f64 {
        let mut start = 0.0;
        for seg in &self.segments {
            if arc_length < start + seg.length {
                return seg.curvature;
            }
            start += seg.length;
        }
        self.segments.last().map_or(0.0, |s| s.curvature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathKind {
    Training,
    Unseen,
    Straight,
    Custom(Vec<PathSegment>),
}

impl PathKind {
    pub fn build(&self) -> Result<Path> {
        match self {
            PathKind::Training => Ok(Path::training()),
            PathKind::Unseen => Ok(Path::unseen()),
            PathKind::Straight => Ok(Path::straight()),
            PathKind::Custom(segments) => Path::new(segments.clone()),
        }
    }
}

/// Kinematic bicycle in path-relative error coordinates
/// `(d_e, theta_e, v, v_target)`, integrated with forward Euler.
#[derive(Debug, Clone)]
pub struct PathTracking {
    params: PathTrackingParams,
    path: Path,
    spec: EnvSpec,
}

impl PathTracking {
    pub fn new(params: PathTrackingParams) -> Result<Self> {
        for (name, v) in [
            ("wheelbase", params.wheelbase),
            ("dt", params.dt),
            ("max_accel", params.max_accel),
            ("max_steer", params.max_steer),
            ("max_offset", params.max_offset),
        ] {
            check_positive(name, v)?;
        }
        if params.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Config("max_steer must be below pi/2".into()));
        }
        check_region("path_tracking init_region", &params.init_region, 4)?;
        let path = params.path.build()?;
        let v_nominal = 0.5 * (params.init_region[3].lo + params.init_region[3].hi);
        let spec = EnvSpec {
            name: "path_tracking".into(),
            state_dim: 4,
            action_dim: 2,
            dt: params.dt,
            domain: vec![
                Interval::symmetric(params.max_offset),
                Interval::symmetric(std::f64::consts::FRAC_PI_2),
                Interval::new(0.0, 10.0),
                Interval::new(0.0, 10.0),
            ],
            action_bounds: vec![
                Interval::symmetric(params.max_accel),
                Interval::symmetric(params.max_steer),
            ],
            equilibrium: vec![0.0, 0.0, v_nominal, v_nominal],
            equilibrium_action: vec![0.0, 0.0],
            horizon: params.horizon,
            init_region: params.init_region.clone(),
        };
        Ok(Self { params, path, spec })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn params(&self) -> &PathTrackingParams {
        &self.params
    }
}

impl Default for PathTracking {
    fn default() -> Self {
        Self::new(PathTrackingParams::default()).expect("default parameters are valid")
    }
}

impl ControlSystem for PathTracking {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn step(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> Result<StepOutcome> {
        check_dim("path_tracking state", 4, state.len())?;
        check_dim("path_tracking control", 2, control.len())?;
        let p = &self.params;
        let (d, theta, v, v_target) = (state[0], state[1], state[2], state[3]);
        let accel = control[0].clamp(-p.max_accel, p.max_accel);
        let steer = control[1].clamp(-p.max_steer, p.max_steer);
        let kappa = self.path.curvature_at(clock.arc_length);
        let denom = 1.0 - kappa * d;
        if denom.abs() < SINGULARITY_GUARD {
            return Ok(StepOutcome {
                state: state.to_vec(),
                clock: EpisodeClock {
                    step: clock.step + 1,
                    ..*clock
                },
                terminated: true,
                wrapped: false,
            });
        }
        let d_dot = v * theta.sin();
        let theta_dot = v / p.wheelbase * steer.tan() - kappa * v * theta.cos() / denom;
        let next = vec![d + p.dt * d_dot, theta + p.dt * theta_dot, v + p.dt * accel, v_target];
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Env("path tracking produced a non-finite state".into()));
        }
        let terminated = next[0].abs() > p.max_offset || next[1].abs() > std::f64::consts::FRAC_PI_2;
        Ok(StepOutcome {
            state: next,
            clock: EpisodeClock {
                step: clock.step + 1,
                arc_length: clock.arc_length + p.dt * v * theta.cos() / denom,
            },
            terminated,
            wrapped: false,
        })
    }

    fn reward(&self, _clock: &EpisodeClock, state: &[f64], control: &[f64]) -> f64 {
        let dv = state[2] - state[3];
        let effort: f64 = control.iter().map(|u| u * u).sum();
        -(state[0] * state[0] + 0.5 * state[1] * state[1] + 0.1 * dv * dv + 0.01 * effort)
    }

    fn tracking_error(&self, state: &[f64]) -> f64 {
        state[0].abs()
    }
}
