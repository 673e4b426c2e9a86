use super::config::{check_positive, check_region};
use super::{rk4, ControlSystem, EnvSpec, EpisodeClock, Interval, QuadrotorParams, StepOutcome};
use crate::error::{check_dim, Error, Result};

const GIMBAL_LIMIT: f64 = std::f64::consts::FRAC_PI_2 - 0.05;

/// Newton-Euler quadrotor in "+" configuration.
///
/// State: position `(x, y, z)`, velocity, Euler angles `(phi, theta, psi)` (ZYX),
/// body rates `(p, q, r)`. Positions and velocities are measured relative to a
/// reference moving at constant horizontal velocity; the equations are the same
/// as in the inertial frame because the reference does not accelerate.
///
/// Rotor 1 sits on +x, rotor 2 on +y, rotor 3 on -x, rotor 4 on -y; rotors 1 and 3
/// produce positive yaw moment.
#[derive(Debug, Clone)]
pub struct Quadrotor {
    params: QuadrotorParams,
    spec: EnvSpec,
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams) -> Result<Self> {
        for (name, v) in [
            ("mass", params.mass),
            ("arm", params.arm),
            ("k_thrust", params.k_thrust),
            ("k_moment", params.k_moment),
            ("ixx", params.ixx),
            ("iyy", params.iyy),
            ("izz", params.izz),
            ("gravity", params.gravity),
            ("dt", params.dt),
            ("max_rotor_speed", params.max_rotor_speed),
            ("action_scale", params.action_scale),
            ("max_position_error", params.max_position_error),
        ] {
            check_positive(name, v)?;
        }
        check_region("quadrotor init_region", &params.init_region, 12)?;
        let hover = (params.mass * params.gravity / (4.0 * params.k_thrust)).sqrt();
        if hover >= params.max_rotor_speed {
            return Err(Error::Config("max_rotor_speed cannot sustain hover".into()));
        }
        let mut domain = vec![Interval::symmetric(params.max_position_error); 3];
        domain.extend([Interval::symmetric(10.0); 3]);
        domain.extend([Interval::symmetric(GIMBAL_LIMIT); 2]);
        domain.push(Interval::symmetric(std::f64::consts::PI));
        domain.extend([Interval::symmetric(20.0); 3]);
        let spec = EnvSpec {
            name: "quadrotor".into(),
            state_dim: 12,
            action_dim: 4,
            dt: params.dt,
            domain,
            action_bounds: vec![Interval::new(0.0, params.max_rotor_speed); 4],
            equilibrium: vec![0.0; 12],
            equilibrium_action: vec![0.0; 4],
            horizon: params.horizon,
            init_region: params.init_region.clone(),
        };
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    /// Rotor speed at which total thrust balances weight.
    pub fn hover_speed(&self) -> f64 {
        (self.params.mass * self.params.gravity / (4.0 * self.params.k_thrust)).sqrt()
    }

    /// Body torques `(roll, pitch, yaw)` from rotor speeds.
    pub fn torques(&self, rotor_speeds: &[f64]) -> [f64; 3] {
        let p = &self.params;
        let sq: Vec<f64> = rotor_speeds.iter().map(|w| w * w).collect();
        [
            p.arm * p.k_thrust * (sq[1] - sq[3]),
            p.arm * p.k_thrust * (sq[2] - sq[0]),
            p.k_moment * (sq[0] - sq[1] + sq[2] - sq[3]),
        ]
    }

    /// Continuous-time state derivative.
    pub fn derivative(&self, s: &[f64], rotor_speeds: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let thrust: f64 = rotor_speeds.iter().map(|w| p.k_thrust * w * w).sum();
        let [tx, ty, tz] = self.torques(rotor_speeds);
        let (phi, theta, psi) = (s[6], s[7], s[8]);
        let (wp, wq, wr) = (s[9], s[10], s[11]);
        let (sphi, cphi) = phi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (spsi, cpsi) = psi.sin_cos();
        let a = thrust / p.mass;
        let tth = sth / cth;
        vec![
            s[3],
            s[4],
            s[5],
            a * (cphi * sth * cpsi + sphi * spsi),
            a * (cphi * sth * spsi - sphi * cpsi),
            a * cphi * cth - p.gravity,
            wp + sphi * tth * wq + cphi * tth * wr,
            cphi * wq - sphi * wr,
            (sphi * wq + cphi * wr) / cth,
            (tx - (p.izz - p.iyy) * wq * wr) / p.ixx,
            (ty - (p.ixx - p.izz) * wp * wr) / p.iyy,
            (tz - (p.iyy - p.ixx) * wp * wq) / p.izz,
        ]
    }
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self::new(QuadrotorParams::default()).expect("default parameters are valid")
    }
}

impl ControlSystem for Quadrotor {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Policy actions are offsets from hover speed in units of `action_scale`.
    fn control(&self, action: &[f64]) -> Vec<f64> {
        let hover = self.hover_speed();
        action
            .iter()
            .map(|a| (hover + self.params.action_scale * a).clamp(0.0, self.params.max_rotor_speed))
            .collect()
    }

    fn step(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> Result<StepOutcome> {
        check_dim("quadrotor state", 12, state.len())?;
        check_dim("quadrotor control", 4, control.len())?;
        let rotors: Vec<f64> = control
            .iter()
            .map(|w| w.clamp(0.0, self.params.max_rotor_speed))
            .collect();
        let next = rk4(state, self.params.dt, |x| self.derivative(x, &rotors));
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Env("quadrotor produced a non-finite state".into()));
        }
        let position_error = next[..3].iter().map(|x| x * x).sum::<f64>().sqrt();
        let terminated = next[6].abs() >= GIMBAL_LIMIT
            || next[7].abs() >= GIMBAL_LIMIT
            || position_error > self.params.max_position_error;
        Ok(StepOutcome {
            state: next,
            clock: EpisodeClock {
                step: clock.step + 1,
                ..*clock
            },
            terminated,
            wrapped: false,
        })
    }

    fn reward(&self, _clock: &EpisodeClock, s: &[f64], _control: &[f64]) -> f64 {
        let sq = |r: std::ops::Range<usize>| s[r].iter().map(|x| x * x).sum::<f64>();
        -(sq(0..3) + 0.1 * sq(3..6) + 0.25 * (s[6] * s[6] + s[7] * s[7]) + 0.01 * sq(9..12))
    }

    fn tracking_error(&self, state: &[f64]) -> f64 {
        state[..3].iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::test_support::*;

    #[test]
    fn hover_is_a_fixed_point() {
        let env = Quadrotor::default();
        let w = env.hover_speed();
        assert!((w - (0.5f64 * 9.81 / 1.2e-5).sqrt()).abs() < 1e-9);
        let s = vec![0.0; 12];
        let out = env.step(&EpisodeClock::default(), &s, &[w; 4]).unwrap();
        assert!(out.state.iter().all(|x| x.abs() < 1e-9), "{:?}", out.state);
        assert_eq!(env.control(&[0.0; 4]), vec![w; 4]);
    }

    #[test]
    fn uniform_overspeed_climbs() {
        let env = Quadrotor::default();
        let w = 1.1 * env.hover_speed();
        let accel = env.derivative(&[0.0; 12], &[w; 4])[5];
        assert!((accel - 9.81 * (1.21 - 1.0)).abs() < 1e-9);
        assert!((accel - 2.06).abs() < 1e-2);
        let out = env.step(&EpisodeClock::default(), &[0.0; 12], &[w; 4]).unwrap();
        // Constant acceleration: RK4 is exact for the quadratic.
        assert!((out.state[5] - accel * 0.01).abs() < 1e-6);
        assert!((out.state[2] - 0.5 * accel * 1e-4).abs() < 1e-6);
        assert!(out.state[6..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn single_rotor_overspeed_torque() {
        let env = Quadrotor::default();
        let h = env.hover_speed();
        let p = env.params().clone();
        let extra = p.k_thrust * h * h * (1.21 - 1.0);
        // Rotor 2 on +y rolls positively about x.
        let t = env.torques(&[h, 1.1 * h, h, h]);
        assert!((t[0] - p.arm * extra).abs() < 1e-12);
        assert_eq!(t[1], 0.0);
        assert!((t[2] + p.k_moment * h * h * 0.21).abs() < 1e-12);
        let d = env.derivative(&[0.0; 12], &[h, 1.1 * h, h, h]);
        assert!((d[9] - p.arm * extra / p.ixx).abs() < 1e-9);
        // Rotor 1 on +x pitches negatively about y.
        let t1 = env.torques(&[1.1 * h, h, h, h]);
        assert!((t1[1] + p.arm * extra).abs() < 1e-12);
    }

    #[test]
    fn gimbal_guard_terminates() {
        let env = Quadrotor::default();
        let mut s = vec![0.0; 12];
        s[7] = GIMBAL_LIMIT - 1e-4;
        s[10] = 5.0;
        let out = env.step(&EpisodeClock::default(), &s, &[env.hover_speed(); 4]).unwrap();
        assert!(out.terminated);
    }

    #[test]
    fn rewards() {
        let env = Quadrotor::default();
        let c = EpisodeClock::default();
        let mut s = vec![0.0; 12];
        assert_eq!(env.reward(&c, &s, &[0.0; 4]), 0.0);
        s[0] = 1.0;
        assert_eq!(env.reward(&c, &s, &[0.0; 4]), -1.0);
        let mut tilted = vec![0.0; 12];
        tilted[6] = 0.2;
        assert!((env.reward(&c, &tilted, &[0.0; 4]) + 0.01).abs() < 1e-12);
    }

    #[test]
    fn halving_dt_shrinks_step_discrepancy() {
        let mut region = vec![Interval::symmetric(0.5); 6];
        region.extend([Interval::symmetric(0.3); 3]);
        region.extend([Interval::symmetric(2.0); 3]);
        let states = random_states(&region, 100, 8);
        let h = Quadrotor::default().hover_speed();
        let ratio = halving_ratio(
            |dt| Quadrotor::new(QuadrotorParams { dt, ..Default::default() }).unwrap(),
            &states,
            &[1.05 * h, 0.97 * h, h, 1.02 * h],
            0.05,
        );
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn lipschitz_determinism_and_resets() {
        let env = Quadrotor::default();
        let mut region = env.spec().init_region.clone();
        for i in region.iter_mut().skip(3).take(3) {
            *i = Interval::symmetric(1.0);
        }
        for i in region.iter_mut().skip(9) {
            *i = Interval::symmetric(1.0);
        }
        let h = env.hover_speed();
        let k = lipschitz_probe(&env, &region, &[h; 4], 9);
        assert!(k.is_finite() && k < 1.5, "K = {k}");
        check_reset_coverage(&env, 10);
        check_reset_determinism(&env);
    }
}
