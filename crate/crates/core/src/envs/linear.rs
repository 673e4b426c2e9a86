use super::config::{check_positive, check_region};
use super::{rk4, ControlSystem, EnvSpec, EpisodeClock, LinearParams, StepOutcome};
use crate::error::{check_dim, Error, Result};

/// Linear time-invariant system `x' = A x + B u`, integrated with RK4 under a held control.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    params: LinearParams,
    spec: EnvSpec,
}

impl LinearSystem {
    pub fn new(params: LinearParams) -> Result<Self> {
        let n = params.a.len();
        if n == 0 || params.a.iter().any(|row| row.len() != n) {
            return Err(Error::Config("A must be a non-empty square matrix".into()));
        }
        if params.b.len() != n {
            return Err(Error::Config(format!("B must have {n} rows")));
        }
        let m = params.b[0].len();
        if m == 0 || params.b.iter().any(|row| row.len() != m) {
            return Err(Error::Config("B rows must share a positive width".into()));
        }
        if params.a.iter().chain(&params.b).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("A and B must be finite".into()));
        }
        check_positive("dt", params.dt)?;
        check_region("linear domain", &params.domain, n)?;
        check_region("linear action_bounds", &params.action_bounds, m)?;
        check_region("linear init_region", &params.init_region, n)?;
        let spec = EnvSpec {
            name: "linear".into(),
            state_dim: n,
            action_dim: m,
            dt: params.dt,
            domain: params.domain.clone(),
            action_bounds: params.action_bounds.clone(),
            equilibrium: vec![0.0; n],
            equilibrium_action: vec![0.0; m],
            horizon: params.horizon,
            init_region: params.init_region.clone(),
        };
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.params
            .a
            .iter()
            .zip(&self.params.b)
            .map(|(ar, br)| {
                ar.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>()
                    + br.iter().zip(u).map(|(b, ui)| b * ui).sum::<f64>()
            })
            .collect()
    }
}

impl ControlSystem for LinearSystem {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn step(&self, clock: &EpisodeClock, state: &[f64], control: &[f64]) -> Result<StepOutcome> {
        check_dim("linear state", self.spec.state_dim, state.len())?;
        check_dim("linear control", self.spec.action_dim, control.len())?;
        let next = rk4(state, self.params.dt, |x| self.derivative(x, control));
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Env("linear system produced a non-finite state".into()));
        }
        Ok(StepOutcome {
            state: next,
            clock: EpisodeClock {
                step: clock.step + 1,
                ..*clock
            },
            terminated: false,
            wrapped: false,
        })
    }

    fn reward(&self, _clock: &EpisodeClock, state: &[f64], control: &[f64]) -> f64 {
        -(state.iter().map(|x| x * x).sum::<f64>() + 0.01 * control.iter().map(|u| u * u).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::test_support::*;

    #[test]
    fn decays_like_the_exponential() {
        let env = LinearSystem::new(LinearParams::default()).unwrap();
        let out = env
            .step(&EpisodeClock::default(), &[1.0, -0.5], &[0.0, 0.0])
            .unwrap();
        let decay = (-0.01f64).exp();
        assert!((out.state[0] - decay).abs() < 1e-10);
        assert!((out.state[1] + 0.5 * decay).abs() < 1e-10);
    }

    #[test]
    fn origin_is_fixed_and_inputs_validated() {
        let env = LinearSystem::new(LinearParams::default()).unwrap();
        let out = env.step(&EpisodeClock::default(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(out.state, vec![0.0, 0.0]);
        let bad = LinearParams {
            a: vec![vec![1.0, 2.0]],
            ..Default::default()
        };
        assert!(LinearSystem::new(bad).is_err());
    }

    #[test]
    fn halving_dt_and_resets() {
        let states = random_states(&LinearParams::default().init_region, 100, 11);
        let ratio = halving_ratio(
            |dt| LinearSystem::new(LinearParams { dt, ..Default::default() }).unwrap(),
            &states,
            &[0.3, -0.2],
            0.5,
        );
        assert!(ratio >= 3.0, "ratio {ratio}");
        let env = LinearSystem::new(LinearParams::default()).unwrap();
        check_reset_coverage(&env, 12);
        check_reset_determinism(&env);
    }
}
