mod certify;
mod compare;
mod eval;
mod fixture;
mod train;

pub use certify::{cmd_certify, CertifyArgs};
pub use compare::{cmd_compare, CompareArgs, CompareSummary, Panel};
pub use eval::{cmd_eval, EvalArgs, EpisodeSummary, EvalSummary};
pub use fixture::{cmd_fixture, linear_fixture, FixtureArgs};
pub use train::{cmd_train, TrainArgs};

use std::path::{Path, PathBuf};

use polyc_core::envs::{ControlSystem, EpisodeClock, Interval};
use polyc_core::lyapunov::Candidate;
use polyc_core::nn::GaussianPolicy;
use polyc_core::validator::{
    certify_band, landscape_map, monte_carlo_validate, CertificationReport, Landscape, MonteCarloReport, PlaneSpec,
    PolicyLoop, MAX_GRID_DIMS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ValidatorMode, ValidatorSettings};
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!("polyc ", env!("CARGO_PKG_VERSION"));

/// `<dir of path>/<name>`, used for default output locations.
pub(crate) fn sibling_dir(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

/// Outcome of certifying one candidate under one validator setting.
#[derive(Debug, Clone)]
pub struct Certification {
    pub mode: ValidatorMode,
    pub region: Vec<Interval>,
    pub slice_point: Vec<f64>,
    /// Full-grid report, or the slice report in slice and Monte Carlo modes.
    pub report: CertificationReport,
    pub monte_carlo: Option<MonteCarloReport>,
    pub landscape: Landscape,
}

/// Runs the certification `settings.mode` asks for and maps the plane.
pub fn certify_candidate(
    env: &dyn ControlSystem,
    policy: &GaussianPolicy,
    candidate: &dyn Candidate,
    settings: &ValidatorSettings,
    seed: u64,
) -> CliResult<Certification> {
    let spec = env.spec();
    settings.validate_for(spec)?;
    let region = settings.region(spec);
    let slice_point = settings.slice_point(spec);
    let [d0, d1] = settings.plane;
    let system = PolicyLoop {
        env,
        policy,
        clock: EpisodeClock {
            step: 0,
            arc_length: settings.arc_length,
        },
    };
    let certify_cfg = settings.certify_config(seed);

    let slice_region = || -> CliResult<Vec<Interval>> {
        let mut r: Vec<Interval> = slice_point.iter().map(|&x| Interval::point(x)).collect();
        r[d0] = region[d0];
        r[d1] = region[d1];
        if r[d0].width() == 0.0 || r[d1].width() == 0.0 {
            return Err(CliError::usage(format!("plane dimensions ({d0}, {d1}) must have nonzero width in the region")));
        }
        Ok(r)
    };
    let (report, monte_carlo) = match settings.mode {
        ValidatorMode::Grid => {
            let free = region.iter().filter(|i| i.width() > 0.0).count();
            if free > MAX_GRID_DIMS {
                return Err(CliError::usage(format!(
                    "full-grid certification supports at most {MAX_GRID_DIMS} free dimensions but the region has {free}; \
                     use --mode slice for a plane cut or --mode mc for sampled validation"
                )));
            }
            (certify_band(candidate, &system, &region, &spec.equilibrium, &certify_cfg)?, None)
        }
        ValidatorMode::Slice => (
            certify_band(candidate, &system, &slice_region()?, &spec.equilibrium, &certify_cfg)?,
            None,
        ),
        ValidatorMode::Mc => {
            let slice = certify_band(candidate, &system, &slice_region()?, &spec.equilibrium, &certify_cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mc = monte_carlo_validate(
                candidate,
                &system,
                &region,
                settings.a_const,
                Some(slice.report.band),
                settings.mc_samples,
                &mut rng,
            )?;
            (slice, Some(mc))
        }
    };
    let report = report.report;
    let plane = PlaneSpec {
        dims: (d0, d1),
        ranges: (region[d0], region[d1]),
        fixed: slice_point.clone(),
        cells: (settings.landscape_cells, settings.landscape_cells),
    };
    if plane.ranges.0.width() == 0.0 || plane.ranges.1.width() == 0.0 {
        return Err(CliError::usage(format!("plane dimensions ({d0}, {d1}) must have nonzero width in the region")));
    }
    plane.check_within(&spec.domain).map_err(CliError::usage)?;
    let landscape = landscape_map(candidate, &system, &plane, settings.a_const, Some(report.band), report.certified)?;
    Ok(Certification {
        mode: settings.mode,
        region,
        slice_point,
        report,
        monte_carlo,
        landscape,
    })
}

/// Serialized certification report: every report field at the top level
/// plus provenance of the run.
#[derive(Debug, Serialize)]
pub struct ReportFile<'a> {
    pub tool_version: &'static str,
    pub env: &'a str,
    pub candidate: &'a str,
    pub requested_mode: ValidatorMode,
    pub seed: u64,
    pub region: &'a [Interval],
    pub plane: [usize; 2],
    pub slice_point: &'a [f64],
    #[serde(flatten)]
    pub report: &'a CertificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<&'a MonteCarloReport>,
}
