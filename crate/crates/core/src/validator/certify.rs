use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classify::{evaluate_cells, CellClassification, CellField, Component};
use super::{build_eps_net, check_region, connected_components, estimate_lipschitz, lie_at, ClosedLoop, EpsNet};
use super::{GridAxis, LipschitzEstimate};
use crate::envs::Interval;
use crate::error::{check_dim, Error, Result};
use crate::lyapunov::Candidate;

/// Number of logarithmic levels each band endpoint sweeps over.
pub const BAND_LEVELS: usize = 20;
/// Largest number of nonzero-width dimensions a full grid is built for.
pub const MAX_GRID_DIMS: usize = 4;
const MARGIN_PRESAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub a_const: f64,
    /// Largest admissible component volume; `None` means ten cell volumes.
    pub epsilon_volume: Option<f64>,
    /// Classification slack; `None` means `0.05 * a * p5(V)` over the box.
    pub margin: Option<f64>,
    pub grid_budget: usize,
    pub min_cells_per_dim: usize,
    pub lipschitz_samples: usize,
    /// On a budget overflow, fall back to the smallest feasible margin
    /// instead of failing.
    pub relax_margin: bool,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            a_const: 0.01,
            epsilon_volume: None,
            margin: None,
            grid_budget: 250_000,
            min_cells_per_dim: 16,
            lipschitz_samples: 2000,
            relax_margin: true,
            seed: 0,
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_const > 0.0 && self.a_const.is_finite()) {
            return Err(Error::Config(format!("a must be positive, got {}", self.a_const)));
        }
        if let Some(eps) = self.epsilon_volume {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("epsilon_volume must be nonnegative, got {eps}")));
            }
        }
        if let Some(m) = self.margin {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("margin must be positive, got {m}")));
            }
        }
        if self.grid_budget == 0 || self.min_cells_per_dim == 0 {
            return Err(Error::Config("grid_budget and min_cells_per_dim must be positive".into()));
        }
        if self.lipschitz_samples < 100 {
            return Err(Error::Config("lipschitz_samples must be at least 100".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificationMode {
    FullGrid,
    /// Some dimensions held fixed; a 2-D or low-dimensional cut, not a proof.
    Slice,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandChecks {
    pub components_small: bool,
    pub lie_bound: bool,
    pub positivity: bool,
}

impl BandChecks {
    pub fn all(&self) -> bool {
        self.components_small && self.lie_bound && self.positivity
    }

    pub fn failed(&self) -> usize {
        [self.components_small, self.lie_bound, self.positivity].iter().filter(|&&ok| !ok).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub axes: Vec<GridAxis>,
    pub total_cells: usize,
    pub cell_diameter: f64,
    pub cell_volume: f64,
    pub lipschitz: LipschitzEstimate,
    pub requested_margin: f64,
    pub margin: f64,
    pub margin_relaxed: bool,
    pub failed_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub certified: bool,
    pub band: (f64, f64),
    pub a_const: f64,
    pub epsilon_volume: f64,
    pub components: Vec<Component>,
    pub violation_fraction: f64,
    pub positivity_ok: bool,
    pub origin_ok: bool,
    #[serde(rename = "min_V_in_band")]
    pub min_v_in_band: f64,
    pub max_lie_in_band: f64,
    pub mode: CertificationMode,
    /// False for slices and sampling; only a full grid backs a certificate.
    pub certifying: bool,
    pub checks: BandChecks,
    pub in_band_cells: usize,
    pub violating_cells: usize,
    pub bands_tried: usize,
    pub grid: GridMetadata,
}

/// The report plus the per-cell data it was computed from, labelled for the reported band.
#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub report: CertificationReport,
    pub classification: CellClassification,
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

fn log_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

struct BandEval {
    band: (f64, f64),
    checks: BandChecks,
    components: Vec<Component>,
    in_band: usize,
    violating: usize,
    min_v: f64,
    max_lie: f64,
}

impl BandEval {
    fn width(&self) -> f64 {
        self.band.1 - self.band.0
    }

    fn largest_component(&self) -> f64 {
        self.components.iter().map(|c| c.volume).fold(0.0, f64::max)
    }

    /// Ordering for failed bands: fewer failed checks, then smaller worst
    /// component, then wider.
    fn better_failure_than(&self, other: &BandEval) -> bool {
        let key = |e: &BandEval| (e.checks.failed(), e.largest_component(), -e.width());
        key(self).partial_cmp(&key(other)) == Some(std::cmp::Ordering::Less)
    }
}

fn evaluate_band(field: &CellField, a_const: f64, eps_vol: f64, band: (f64, f64)) -> Option<BandEval> {
    let mut mask = vec![false; field.values.len()];
    let (mut in_band, mut violating) = (0, 0);
    let (mut min_v, mut max_lie) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, (&v, &lie)) in field.values.iter().zip(&field.lies).enumerate() {
        if v < band.0 || v > band.1 {
            continue;
        }
        in_band += 1;
        min_v = min_v.min(v);
        max_lie = max_lie.max(lie);
        if lie >= -a_const * v {
            mask[k] = true;
            violating += 1;
        }
    }
    if in_band == 0 {
        return None;
    }
    let components = connected_components(&field.net, &mask);
    let checks = BandChecks {
        components_small: components.iter().all(|c| c.volume <= eps_vol),
        lie_bound: max_lie < a_const * min_v,
        positivity: field.positivity_ok && field.origin_ok,
    };
    Some(BandEval {
        band,
        checks,
        components,
        in_band,
        violating,
        min_v,
        max_lie,
    })
}

fn grid_mode(net: &EpsNet) -> CertificationMode {
    if net.active_axes().len() == net.dim() {
        CertificationMode::FullGrid
    } else {
        CertificationMode::Slice
    }
}

/// Builds the ε-net for `region` and searches sublevel bands `(c1, c2)` for
/// the widest one satisfying the almost-Lyapunov conditions. Zero-width
/// dimensions of `region` are held fixed (slice mode).
pub fn certify_band<C: Candidate + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    region: &[Interval],
    origin: &[f64],
    config: &CertifyConfig,
) -> Result<CertifyOutcome> {
    config.validate()?;
    let active = check_region(region)?;
    check_dim("certification box", system.state_dim(), region.len())?;
    check_dim("origin", system.state_dim(), origin.len())?;
    if active.len() > MAX_GRID_DIMS {
        return Err(Error::Validator(format!(
            "{} free dimensions exceed the full-grid limit of {MAX_GRID_DIMS}; fix some dimensions (slice) or use Monte Carlo validation",
            active.len()
        )));
    }
    let a = config.a_const;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let requested_margin = match config.margin {
        Some(m) => m,
        None => {
            let mut pre = Vec::with_capacity(MARGIN_PRESAMPLES);
            for _ in 0..MARGIN_PRESAMPLES {
                let x: Vec<f64> = region.iter().map(|i| i.sample(&mut rng)).collect();
                pre.push(v.value(&x)?);
            }
            pre.sort_by(f64::total_cmp);
            let scale = percentile(&pre, 5.0).abs().max(1e-9);
            0.05 * a * scale
        }
    };
    let lipschitz = estimate_lipschitz(v, system, region, config.lipschitz_samples, &mut rng)?;
    let mut margin = requested_margin;
    let mut margin_relaxed = false;
    let net = if lipschitz.value > 0.0 {
        let net = match build_eps_net(region, lipschitz.value, margin, config.grid_budget) {
            Err(Error::GridBudget { feasible, .. }) if config.relax_margin => {
                margin = feasible;
                margin_relaxed = true;
                build_eps_net(region, lipschitz.value, margin, config.grid_budget)?
            }
            other => other?,
        };
        let counts: Vec<usize> = net.axes.iter().map(|ax| ax.cells.max(config.min_cells_per_dim)).collect();
        EpsNet::from_counts(region, &counts)?
    } else {
        EpsNet::from_counts(region, &vec![config.min_cells_per_dim; region.len()])?
    };

    let field = evaluate_cells(v, system, &net, origin)?;
    let eps_vol = config.epsilon_volume.unwrap_or(10.0 * net.cell_volume());

    let mut sorted = field.values.clone();
    sorted.sort_by(f64::total_cmp);
    let hi = percentile(&sorted, 95.0);
    let lo = percentile(&sorted, 5.0).max(1e-12 * hi.abs().max(1.0));
    if !(hi > lo) {
        return Err(Error::Validator(format!(
            "candidate is flat or nonpositive on the box (p5 {lo}, p95 {hi}); no band to search"
        )));
    }
    // c1 sweeps up from p5 and c2 down from p95 to the shared geometric midpoint.
    let levels = log_levels(lo, hi, 2 * BAND_LEVELS - 1);
    let mid = BAND_LEVELS - 1;

    let mut best_pass: Option<BandEval> = None;
    let mut best_fail: Option<BandEval> = None;
    let mut tried = 0;
    for &c1 in &levels[..=mid] {
        for &c2 in &levels[mid..] {
            if c2 <= c1 {
                continue;
            }
            if best_pass.as_ref().is_some_and(|b| c2 - c1 <= b.width()) {
                continue;
            }
            let Some(eval) = evaluate_band(&field, a, eps_vol, (c1, c2)) else {
                continue;
            };
            tried += 1;
            if eval.checks.all() {
                best_pass = Some(eval);
            } else if best_pass.is_none() && best_fail.as_ref().is_none_or(|b| eval.better_failure_than(b)) {
                best_fail = Some(eval);
            }
        }
    }
    let chosen = best_pass
        .or(best_fail)
        .ok_or_else(|| Error::Validator("no sublevel band contains a grid cell".into()))?;

    let mode = grid_mode(&net);
    let report = CertificationReport {
        certified: chosen.checks.all(),
        band: chosen.band,
        a_const: a,
        epsilon_volume: eps_vol,
        violation_fraction: chosen.violating as f64 / chosen.in_band as f64,
        positivity_ok: field.positivity_ok,
        origin_ok: field.origin_ok,
        min_v_in_band: chosen.min_v,
        max_lie_in_band: chosen.max_lie,
        mode,
        certifying: mode == CertificationMode::FullGrid,
        checks: chosen.checks,
        in_band_cells: chosen.in_band,
        violating_cells: chosen.violating,
        bands_tried: tried,
        components: chosen.components,
        grid: GridMetadata {
            axes: net.axes.clone(),
            total_cells: net.total_cells(),
            cell_diameter: net.diameter,
            cell_volume: net.cell_volume(),
            lipschitz,
            requested_margin,
            margin,
            margin_relaxed,
            failed_steps: field.failed_steps,
        },
    };
    let classification = CellClassification::from_field(field, a, chosen.band)?;
    Ok(CertifyOutcome { report, classification })
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub mode: CertificationMode,
    /// Always false: sampling bounds a fraction, it does not certify.
    pub certifying: bool,
    pub a_const: f64,
    pub band: Option<(f64, f64)>,
    pub samples: usize,
    /// Samples that fell in the band (all samples without a band).
    pub counted: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub confidence_interval: (f64, f64),
    pub failed_steps: usize,
}

/// Fraction of uniform samples in `region` with `lie >= -a V`, with a 95%
/// Wilson interval. With a band, only samples whose `V` lies in it count.
pub fn monte_carlo_validate<C: Candidate + ?Sized, R: Rng + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    region: &[Interval],
    a_const: f64,
    band: Option<(f64, f64)>,
    n_samples: usize,
    rng: &mut R,
) -> Result<MonteCarloReport> {
    check_region(region)?;
    check_dim("sampling box", system.state_dim(), region.len())?;
    if n_samples < 1000 {
        return Err(Error::Config("Monte Carlo validation needs at least 1000 samples".into()));
    }
    if !(a_const > 0.0) {
        return Err(Error::Config(format!("a must be positive, got {a_const}")));
    }
    let (mut counted, mut violations, mut failed_steps) = (0, 0, 0);
    for _ in 0..n_samples {
        let x: Vec<f64> = region.iter().map(|i| i.sample(rng)).collect();
        let (vx, lie) = match lie_at(v, system, &x) {
            Ok((vx, lie)) => (vx, if lie.is_finite() { lie } else { f64::INFINITY }),
            Err(_) => {
                failed_steps += 1;
                (v.value(&x)?, f64::INFINITY)
            }
        };
        if let Some((c1, c2)) = band {
            if vx < c1 || vx > c2 {
                continue;
            }
        }
        counted += 1;
        if lie >= -a_const * vx {
            violations += 1;
        }
    }
    Ok(MonteCarloReport {
        mode: CertificationMode::MonteCarlo,
        certifying: false,
        a_const,
        band,
        samples: n_samples,
        counted,
        violations,
        violation_fraction: if counted > 0 { violations as f64 / counted as f64 } else { 0.0 },
        confidence_interval: wilson_interval(violations, counted, 1.96),
        failed_steps,
    })
}
