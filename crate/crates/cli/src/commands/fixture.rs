use std::path::PathBuf;

use nalgebra::DMatrix;
use polyc_core::envs::{EnvConfig, Interval, LinearParams};
use polyc_core::lyapunov::{CriticConfig, QuadraticCandidate};
use polyc_core::nn::{Activation, GaussianPolicy, Mlp};
use polyc_core::policy_opt::PolycConfig;

use crate::bundle::{Bundle, CriticModel, BUNDLE_FORMAT};
use crate::config::{RunConfig, ValidatorSettings};
use crate::error::CliResult;
use crate::lqr::kleinman;

#[derive(Debug, Clone, clap::Args)]
pub struct FixtureArgs {
    /// Output directory for `bundle.json`.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Linear feedback `u = -K x` on `x' = A x + u` with `A = [[0, 1], [-2, -3]]`,
/// `K` the LQR gain for `Q = R = I` and the Riccati solution as critic.
pub fn linear_fixture() -> CliResult<Bundle> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let b = DMatrix::<f64>::identity(2, 2);
    let eye = DMatrix::<f64>::identity(2, 2);
    let sol = kleinman(&a, &b, &eye, &eye, DMatrix::zeros(2, 2))?;

    let params = LinearParams {
        a: vec![vec![0.0, 1.0], vec![-2.0, -3.0]],
        b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        dt: 0.01,
        horizon: 500,
        domain: vec![Interval::symmetric(2.0); 2],
        action_bounds: vec![Interval::symmetric(10.0); 2],
        init_region: vec![Interval::symmetric(1.0); 2],
    };
    let config = RunConfig {
        seed: 0,
        output_dir: PathBuf::from("runs/fixture"),
        checkpoint_interval: 0,
        env: EnvConfig::Linear(params),
        algo: PolycConfig::default(),
        critic: CriticConfig::default(),
        validator: ValidatorSettings::default(),
    };
    config.validate()?;

    let mut mean_net = Mlp::zeros(&[2, 2], Activation::Tanh)?;
    let w = mean_net.weights_mut(0);
    for i in 0..2 {
        for j in 0..2 {
            w[i * 2 + j] = -sol.k[(i, j)];
        }
    }
    let policy = GaussianPolicy::from_parts(mean_net, vec![-0.5; 2])?;
    let p = (0..2).map(|i| (0..2).map(|j| sol.p[(i, j)]).collect()).collect();
    Ok(Bundle {
        format: BUNDLE_FORMAT,
        config,
        policy,
        value_net: Mlp::zeros(&[2, 1], Activation::Tanh)?,
        critic: CriticModel::Quadratic {
            quadratic: QuadraticCandidate::new(p),
        },
        iter: 0,
        seed: 0,
    })
}

/// Writes the linear fixture bundle and returns its path.
pub fn cmd_fixture(args: &FixtureArgs) -> CliResult<PathBuf> {
    let bundle = linear_fixture()?;
    let path = args.output.join("bundle.json");
    bundle.save(&path)?;
    println!("wrote {}", path.display());
    Ok(path)
}
