use std::path::PathBuf;

use polyc_core::validator::render_svg;

use super::{certify_candidate, sibling_dir, Certification, ReportFile, TOOL_VERSION};
use crate::bundle::Bundle;
use crate::config::{parse_plane, ValidatorMode};
use crate::error::CliResult;
use crate::io::{write_atomic, write_json};

#[derive(Debug, Clone, clap::Args)]
pub struct CertifyArgs {
    /// Checkpoint bundle (JSON).
    #[arg(short = 'k', long)]
    pub checkpoint: PathBuf,
    /// Decay constant `a` in the Lie-derivative condition.
    #[arg(long = "a")]
    pub a: Option<f64>,
    /// Largest admissible volume of a connected violation component.
    #[arg(long)]
    pub eps_vol: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ValidatorMode>,
    /// Landscape plane as `d0,d1`.
    #[arg(long)]
    pub plane: Option<String>,
    /// Output directory; defaults to `certify/` next to the checkpoint.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Certifies the bundle's critic on its policy's closed loop and writes
/// `report.json`, `landscape.json` and `landscape.svg`. An uncertified
/// candidate is a result, not an error.
pub fn cmd_certify(args: &CertifyArgs) -> CliResult<Certification> {
    let mut bundle = Bundle::load(&args.checkpoint)?;
    let settings = &mut bundle.config.validator;
    if let Some(a) = args.a {
        settings.a_const = a;
    }
    if let Some(eps) = args.eps_vol {
        settings.epsilon_volume = Some(eps);
    }
    if let Some(mode) = args.mode {
        settings.mode = mode;
    }
    if let Some(plane) = &args.plane {
        settings.plane = parse_plane(plane)?;
    }
    let env = bundle.build_env()?;
    let spec = env.spec();
    let settings = &bundle.config.validator;
    let cert = certify_candidate(env.as_ref(), &bundle.policy, &bundle.critic, settings, bundle.seed)?;

    let out = args.output.clone().unwrap_or_else(|| sibling_dir(&args.checkpoint, "certify"));
    let file = ReportFile {
        tool_version: TOOL_VERSION,
        env: &spec.name,
        candidate: bundle.critic.kind(),
        requested_mode: settings.mode,
        seed: bundle.seed,
        region: &cert.region,
        plane: settings.plane,
        slice_point: &cert.slice_point,
        report: &cert.report,
        monte_carlo: cert.monte_carlo.as_ref(),
    };
    write_json(&out.join("report.json"), &file)?;
    write_json(&out.join("landscape.json"), &cert.landscape)?;
    write_atomic(&out.join("landscape.svg"), render_svg(std::slice::from_ref(&cert.landscape)).as_bytes())?;

    let r = &cert.report;
    println!(
        "{}: band [{:.6}, {:.6}], violating cells {}/{}, components {}",
        if r.certified { "certified" } else { "not certified" },
        r.band.0,
        r.band.1,
        r.violating_cells,
        r.in_band_cells,
        r.components.len()
    );
    if !r.certified {
        let c = &r.checks;
        let failed: Vec<&str> = [
            (c.components_small, "components_small"),
            (c.lie_bound, "lie_bound"),
            (c.positivity, "positivity"),
        ]
        .into_iter()
        .filter_map(|(ok, name)| (!ok).then_some(name))
        .collect();
        println!("failed checks: {}", failed.join(", "));
    }
    if let Some(mc) = &cert.monte_carlo {
        println!(
            "monte carlo: violation fraction {:.4} (95% CI [{:.4}, {:.4}]) over {} in-band samples",
            mc.violation_fraction, mc.confidence_interval.0, mc.confidence_interval.1, mc.counted
        );
    }
    Ok(cert)
}
