use std::path::PathBuf;

use polyc_core::envs::{EpisodeClock, Interval};
use polyc_core::validator::{render_svg, CertificationReport, Landscape};
use serde::{Deserialize, Serialize};

use super::{certify_candidate, sibling_dir, TOOL_VERSION};
use crate::bundle::{Bundle, CriticModel};
use crate::config::parse_plane;
use crate::error::{CliError, CliResult};
use crate::io::{write_atomic, write_json};
use crate::lqr::lqr_candidate;

#[derive(Debug, Clone, clap::Args)]
pub struct CompareArgs {
    /// Checkpoint bundles; the first one sets the environment, the validator
    /// settings and the reference band.
    #[arg(short = 'k', long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Landscape plane as `d0,d1`.
    #[arg(long)]
    pub plane: Option<String>,
    /// Skip the LQR quadratic panel.
    #[arg(long)]
    pub no_lqr: bool,
    /// Output directory; defaults to `compare/` next to the first checkpoint.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub label: String,
    pub candidate: String,
    pub certified: bool,
    pub band: (f64, f64),
    /// Cells violating the decrease condition whose reference value lies in
    /// the reference band.
    pub violating_in_reference_band: usize,
    pub reference_band_cells: usize,
    pub report: CertificationReport,
    pub landscape: Landscape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub tool_version: String,
    pub env: String,
    pub plane: [usize; 2],
    pub region: Vec<Interval>,
    pub reference_band: (f64, f64),
    pub reference_certified: bool,
    pub panels: Vec<Panel>,
    /// Why the LQR panel is missing, when it was requested but could not be built.
    pub lqr_error: Option<String>,
}

fn reference_counts(reference: &Landscape, band: (f64, f64), panel: &Landscape, a: f64) -> (usize, usize) {
    let mut in_band = 0;
    let mut violating = 0;
    for (i, &v_ref) in reference.values.iter().enumerate() {
        if v_ref < band.0 || v_ref > band.1 {
            continue;
        }
        in_band += 1;
        let lie = panel.lies[i];
        if lie.is_nan() || lie >= -a * panel.values[i] {
            violating += 1;
        }
    }
    (in_band, violating)
}

/// Certifies each bundle and an LQR quadratic candidate under the first
/// bundle's validator settings and renders the landscapes side by side.
pub fn cmd_compare(args: &CompareArgs) -> CliResult<CompareSummary> {
    let bundles = args
        .checkpoints
        .iter()
        .map(|p| Bundle::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let first = &bundles[0];
    for (path, b) in args.checkpoints.iter().zip(&bundles).skip(1) {
        if b.config.env != first.config.env {
            return Err(CliError::usage(format!(
                "checkpoint {} uses a different environment ({}) than {} ({})",
                path.display(),
                b.config.env.name(),
                args.checkpoints[0].display(),
                first.config.env.name()
            )));
        }
    }
    let mut settings = first.config.validator.clone();
    if let Some(plane) = &args.plane {
        settings.plane = parse_plane(plane)?;
    }
    let env = first.build_env()?;
    let spec = env.spec();

    let mut certified = Vec::new();
    for (path, b) in args.checkpoints.iter().zip(&bundles) {
        let cert = certify_candidate(env.as_ref(), &b.policy, &b.critic, &settings, first.seed)?;
        certified.push((path.display().to_string(), b.critic.kind().to_string(), cert));
    }
    let mut lqr_error = None;
    if !args.no_lqr {
        let clock = EpisodeClock {
            step: 0,
            arc_length: settings.arc_length,
        };
        match lqr_candidate(env.as_ref(), &clock) {
            Ok(quadratic) => {
                let candidate = CriticModel::Quadratic { quadratic };
                let cert = certify_candidate(env.as_ref(), &first.policy, &candidate, &settings, first.seed)?;
                certified.push(("lqr".into(), candidate.kind().to_string(), cert));
            }
            Err(e) => lqr_error = Some(format!("{e:#}")),
        }
    }

    let reference = certified[0].2.landscape.clone();
    let reference_band = certified[0].2.report.band;
    let reference_certified = certified[0].2.report.certified;
    let panels: Vec<Panel> = certified
        .into_iter()
        .map(|(label, candidate, cert)| {
            let (cells, violating) = reference_counts(&reference, reference_band, &cert.landscape, settings.a_const);
            Panel {
                label,
                candidate,
                certified: cert.report.certified,
                band: cert.report.band,
                violating_in_reference_band: violating,
                reference_band_cells: cells,
                report: cert.report,
                landscape: cert.landscape,
            }
        })
        .collect();

    let out = args.output.clone().unwrap_or_else(|| sibling_dir(&args.checkpoints[0], "compare"));
    let landscapes: Vec<Landscape> = panels.iter().map(|p| p.landscape.clone()).collect();
    let summary = CompareSummary {
        tool_version: TOOL_VERSION.into(),
        env: spec.name.clone(),
        plane: settings.plane,
        region: settings.region(spec),
        reference_band,
        reference_certified,
        panels,
        lqr_error,
    };
    write_json(&out.join("compare.json"), &summary)?;
    write_atomic(&out.join("compare.svg"), render_svg(&landscapes).as_bytes())?;
    for p in &summary.panels {
        println!(
            "{:<40} {:<9} {:<14} violating in reference band {}/{}",
            p.label,
            p.candidate,
            if p.certified { "certified" } else { "not certified" },
            p.violating_in_reference_band,
            p.reference_band_cells
        );
    }
    if let Some(e) = &summary.lqr_error {
        println!("lqr candidate unavailable: {e}");
    }
    Ok(summary)
}
