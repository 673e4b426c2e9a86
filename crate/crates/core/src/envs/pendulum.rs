use std::f64::consts::PI;

use super::config::{check_positive, check_region};
use super::{ControlSystem, EnvSpec, EpisodeClock, Interval, PendulumParams, StepOutcome};
use crate::error::{check_dim, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    PI - (PI - x).rem_euclid(2.0 * PI)
}

/// Torque-limited pendulum, upright at `theta = 0`, with the Gym update rule:
/// semi-implicit Euler, clamped angular speed, wrapped angle.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    spec: EnvSpec,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        for (name, v) in [
            ("gravity", params.gravity),
            ("mass", params.mass),
            ("length", params.length),
            ("max_torque", params.max_torque),
            ("max_speed", params.max_speed),
            ("dt", params.dt),
        ] {
            check_positive(name, v)?;
        }
        check_region("pendulum init_region", &params.init_region, 2)?;
        let spec = EnvSpec {
            name: "pendulum".into(),
            state_dim: 2,
            action_dim: 1,
            dt: params.dt,
            domain: vec![Interval::symmetric(PI), Interval::symmetric(params.max_speed)],
            action_bounds: vec![Interval::symmetric(params.max_torque)],
            equilibrium: vec![0.0, 0.0],
            equilibrium_action: vec![0.0],
            horizon: params.horizon,
            init_region: params.init_region.clone(),
        };
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    fn angular_acceleration(&self, theta: f64, torque: f64) -> f64 {
        let p = &self.params;
        3.0 * p.gravity / (2.0 * p.length) * theta.sin() + 3.0 / (p.mass * p.length * p.length) * torque
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumParams::default()).expect("default parameters are valid")
    }
}

impl ControlSystem for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn step(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> Result<StepOutcome> {
        check_dim("pendulum state", 2, state.len())?;
        check_dim("pendulum control", 1, control.len())?;
        let p = &self.params;
        let torque = control[0].clamp(-p.max_torque, p.max_torque);
        let speed = (state[1] + p.dt * self.angular_acceleration(state[0], torque))
            .clamp(-p.max_speed, p.max_speed);
        let raw = state[0] + p.dt * speed;
        Ok(StepOutcome {
            state: vec![wrap_angle(raw), speed],
            clock: EpisodeClock {
                step: clock.step + 1,
                ..*clock
            },
            terminated: false,
            wrapped: raw > PI || raw <= -PI,
        })
    }

    fn reward(&self, _clock: &EpisodeClock, state: &[f64], control: &[f64]) -> f64 {
        let theta = wrap_angle(state[0]);
        let u = control[0].clamp(-self.params.max_torque, self.params.max_torque);
        -(theta * theta + 0.1 * state[1] * state[1] + 0.001 * u * u)
    }

    fn tracking_error(&self, state: &[f64]) -> f64 {
        wrap_angle(state[0]).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::test_support::*;
    use rand::SeedableRng;

    fn step(env: &Pendulum, s: [f64; 2], u: f64) -> StepOutcome {
        env.step(&EpisodeClock::default(), &s, &[u]).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn upright_is_a_fixed_point() {
        let env = Pendulum::default();
        let out = step(&env, [0.0, 0.0], 0.0);
        assert_eq!(out.state, vec![0.0, 0.0]);
        assert!(!out.wrapped);
        assert_eq!(out.clock.step, 1);
    }

    #[test]
    fn gravity_accelerates_away_from_upright() {
        let out = step(&Pendulum::default(), [PI / 2.0, 0.0], 0.0);
        assert!((out.state[1] - 0.75).abs() < 1e-12);
        assert!((out.state[0] - (PI / 2.0 + 0.05 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn torque_and_speed_are_clamped() {
        let env = Pendulum::default();
        let a = step(&env, [0.0, 0.0], 50.0);
        let b = step(&env, [0.0, 0.0], 2.0);
        assert_eq!(a.state, b.state);
        let fast = step(&env, [PI / 2.0, 7.9], 2.0);
        assert_eq!(fast.state[1], 8.0);
    }

    #[test]
    fn wrap_event_is_flagged() {
        let out = step(&Pendulum::default(), [3.1, 2.0], 0.0);
        assert!(out.wrapped);
        assert!(out.state[0] < 0.0);
    }

    #[test]
    fn rewards() {
        let env = Pendulum::default();
        let c = EpisodeClock::default();
        assert_eq!(env.reward(&c, &[0.0, 0.0], &[0.0]), 0.0);
        assert!((env.reward(&c, &[PI, 0.0], &[0.0]) + PI * PI).abs() < 1e-12);
        assert!((env.reward(&c, &[0.5, 1.0], &[2.0]) + 0.354).abs() < 1e-12);
    }

    /// Independent RK4 integration of the same ODE; reference values were
    /// computed once with this oracle and frozen as bounds below.
    #[test]
    fn free_fall_tracks_rk4_reference() {
        let env = Pendulum::default();
        let f = |x: &[f64]| vec![x[1], 15.0 * x[0].sin()];
        let mut s = vec![0.1, 0.0];
        let mut reference = vec![0.1, 0.0];
        let mut clock = EpisodeClock::default();
        let energy = |x: &[f64]| 0.5 * x[1] * x[1] + 15.0 * x[0].cos();
        let e0 = energy(&s);
        let mut worst_rel: f64 = 0.0;
        let mut worst_energy: f64 = 0.0;
        for k in 0..200 {
            let out = env.step(&clock, &s, &[0.0]).unwrap();
            s = out.state;
            clock = out.clock;
            reference = crate::envs::rk4(&reference, 0.05, f);
            let dtheta = wrap_angle(s[0] - reference[0]);
            let dspeed = s[1] - reference[1];
            if k < 10 {
                assert!(dtheta.abs() < 5e-2 && dspeed.abs() < 5e-2, "step {k}");
            }
            let scale = (reference[0].powi(2) + reference[1].powi(2)).sqrt().max(1.0);
            worst_rel = worst_rel.max(dtheta.hypot(dspeed) / scale);
            worst_energy = worst_energy.max((energy(&s) - e0).abs());
        }
        // Oracle: relative error peaks at 0.091, energy excursion at 2.28 and does not grow secularly.
        assert!(worst_rel < 0.1, "relative error {worst_rel}");
        assert!(worst_energy < 2.5, "energy excursion {worst_energy}");
    }

    #[test]
    fn halving_dt_shrinks_step_discrepancy() {
        let states = random_states(&[Interval::symmetric(2.5), Interval::symmetric(3.0)], 100, 1);
        let ratio = halving_ratio(
            |dt| Pendulum::new(PendulumParams { dt, ..Default::default() }).unwrap(),
            &states,
            &[0.5],
            0.05,
        );
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn lipschitz_and_determinism() {
        let env = Pendulum::default();
        let region = [Interval::symmetric(3.0), Interval::symmetric(7.0)];
        let k = lipschitz_probe(&env, &region, &[0.3], 2);
        assert!(k.is_finite() && k < 2.0, "K = {k}");
        let a = step(&env, [0.3, -0.2], 1.1);
        let b = step(&env, [0.3, -0.2], 1.1);
        assert_eq!(a, b);
    }

    #[test]
    fn resets() {
        let env = Pendulum::default();
        check_reset_coverage(&env, 3);
        check_reset_determinism(&env);
        let pinned = Pendulum::new(PendulumParams {
            init_region: vec![Interval::point(0.2), Interval::point(-0.1)],
            ..Default::default()
        })
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pinned.reset(&mut rng).0, vec![0.2, -0.1]);
    }
}
