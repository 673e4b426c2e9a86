//! Sample-based certification of candidate Lyapunov functions.
//!
//! The box is partitioned into an ε-net whose cell size follows an empirical
//! Lipschitz constant of the sampled Lie derivative. Cells are evaluated at
//! their centers and classified against a sublevel band `c1 <= V <= c2`;
//! violating cells are grouped into face-connected components, and a band is
//! accepted when every component is small, the Lie derivative is bounded by
//! `a * min V` on the band, and `V` is nonnegative on the grid.

mod certify;
mod classify;
mod landscape;

pub use certify::{
    certify_band, monte_carlo_validate, wilson_interval, BandChecks, CertificationMode, CertificationReport,
    CertifyConfig, CertifyOutcome, GridMetadata, MonteCarloReport, BAND_LEVELS, MAX_GRID_DIMS,
};
pub use classify::{
    classify_cells, connected_components, evaluate_cells, CellClassification, CellField, CellLabel, Component,
};
pub use landscape::{landscape_map, render_svg, Contour, Landscape, PlaneSpec, CONTOUR_LEVELS};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{ControlSystem, EpisodeClock, Interval};
use crate::error::{check_dim, Error, Result};
use crate::lyapunov::Candidate;
use crate::nn::GaussianPolicy;

/// Deterministic closed-loop map `x -> x'` over one time step.
pub trait ClosedLoop: Sync {
    fn state_dim(&self) -> usize;
    fn dt(&self) -> f64;
    fn successor(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// An environment driven by a policy's noise-free mean action.
#[derive(Debug, Clone, Copy)]
pub struct PolicyLoop<'a> {
    pub env: &'a dyn ControlSystem,
    pub policy: &'a GaussianPolicy,
    /// Episode context the step is taken in (arc length for path following).
    pub clock: EpisodeClock,
}

impl<'a> PolicyLoop<'a> {
    pub fn new(env: &'a dyn ControlSystem, policy: &'a GaussianPolicy) -> Self {
        Self {
            env,
            policy,
            clock: EpisodeClock::default(),
        }
    }
}

impl ClosedLoop for PolicyLoop<'_> {
    fn state_dim(&self) -> usize {
        self.env.spec().state_dim
    }

    fn dt(&self) -> f64 {
        self.env.spec().dt
    }

    fn successor(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::lyapunov::mean_action_successor(self.env, self.policy, &self.clock, x)
    }
}

/// Autonomous vector field integrated with RK4 over `substeps` per step.
pub struct FlowLoop<F> {
    pub dim: usize,
    pub dt: f64,
    pub substeps: usize,
    pub field: F,
}

impl<F> FlowLoop<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, dt: f64, field: F) -> Self {
        Self {
            dim,
            dt,
            substeps: 10,
            field,
        }
    }
}

impl<F> ClosedLoop for FlowLoop<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn successor(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("flow state", self.dim, x.len())?;
        let h = self.dt / self.substeps.max(1) as f64;
        let mut s = x.to_vec();
        for _ in 0..self.substeps.max(1) {
            s = crate::envs::rk4(&s, h, &self.field);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow successor"));
        }
        Ok(s)
    }
}

/// Sampled Lie derivative of `v` at `x` along one closed-loop step.
pub fn lie_at<C: Candidate + ?Sized>(v: &C, system: &dyn ClosedLoop, x: &[f64]) -> Result<(f64, f64)> {
    let vx = v.value(x)?;
    let next = system.successor(x)?;
    let lie = (v.value(&next)? - vx) / system.dt();
    Ok((vx, lie))
}

pub(crate) fn check_region(region: &[Interval]) -> Result<Vec<usize>> {
    if region.iter().any(|i| !(i.lo.is_finite() && i.hi.is_finite()) || i.hi < i.lo) {
        return Err(Error::Validator("box bounds must be finite with lo <= hi".into()));
    }
    let active: Vec<usize> = (0..region.len()).filter(|&d| region[d].width() > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Validator("degenerate box: every dimension has zero width".into()));
    }
    Ok(active)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Largest observed `|lie(x1) - lie(x2)| / |x1 - x2|`.
    pub raw: f64,
    /// `raw` times the safety factor; this is what sizes the grid.
    pub value: f64,
    pub safety_factor: f64,
    pub pairs: usize,
}

pub const LIPSCHITZ_SAFETY: f64 = 2.0;
const PAIR_DISTANCE: f64 = 1e-3;

/// Heuristic Lipschitz constant of `x -> lie(x)` from random pairs at
/// distance 1e-3, perturbing only the box's nonzero-width dimensions. Pairs
/// are drawn sequentially, so a larger `samples` extends the same sequence.
pub fn estimate_lipschitz<C: Candidate + ?Sized, R: Rng + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    region: &[Interval],
    samples: usize,
    rng: &mut R,
) -> Result<LipschitzEstimate> {
    let active = check_region(region)?;
    check_dim("lipschitz box", system.state_dim(), region.len())?;
    if samples < 100 {
        return Err(Error::Config("Lipschitz estimation needs at least 100 samples".into()));
    }
    let mut raw: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples {
        let x: Vec<f64> = region.iter().map(|i| i.sample(rng)).collect();
        let mut dir: Vec<f64> = active.iter().map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|d| *d *= PAIR_DISTANCE / norm);
        let mut y = x.clone();
        for (k, &d) in active.iter().enumerate() {
            y[d] += dir[k];
        }
        let (Ok((_, l1)), Ok((_, l2))) = (lie_at(v, system, &x), lie_at(v, system, &y)) else {
            continue;
        };
        let ratio = (l1 - l2).abs() / PAIR_DISTANCE;
        if ratio.is_finite() {
            raw = raw.max(ratio);
            used += 1;
        }
    }
    Ok(LipschitzEstimate {
        raw,
        value: raw * LIPSCHITZ_SAFETY,
        safety_factor: LIPSCHITZ_SAFETY,
        pairs: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    /// `(hi - lo) / cells`; zero on fixed (zero-width) axes.
    pub width: f64,
}

impl GridAxis {
    pub fn center(&self, i: usize) -> f64 {
        if self.width == 0.0 {
            self.lo
        } else {
            self.lo + (i as f64 + 0.5) * self.width
        }
    }
}

/// Uniform partition of a box. Cells are indexed row-major with the first
/// axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsNet {
    pub axes: Vec<GridAxis>,
    /// Diagonal of one cell over the nonzero-width axes.
    pub diameter: f64,
}

impl EpsNet {
    pub fn from_counts(region: &[Interval], counts: &[usize]) -> Result<Self> {
        check_region(region)?;
        check_dim("grid counts", region.len(), counts.len())?;
        let axes: Vec<GridAxis> = region
            .iter()
            .zip(counts)
            .map(|(i, &c)| {
                let cells = if i.width() > 0.0 { c.max(1) } else { 1 };
                GridAxis {
                    lo: i.lo,
                    hi: i.hi,
                    cells,
                    width: i.width() / cells as f64,
                }
            })
            .collect();
        let diameter = axes.iter().map(|a| a.width * a.width).sum::<f64>().sqrt();
        Ok(Self { axes, diameter })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn total_cells(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    /// Axes with nonzero width.
    pub fn active_axes(&self) -> Vec<usize> {
        (0..self.axes.len()).filter(|&d| self.axes[d].width > 0.0).collect()
    }

    /// Product of the cell widths over the nonzero-width axes.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().filter(|a| a.width > 0.0).map(|a| a.width).product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.axes.len()];
        for d in (0..self.axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.axes[d + 1].cells;
        }
        strides
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            idx[d] = flat % self.axes[d].cells;
            flat /= self.axes[d].cells;
        }
        idx
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.center(i))
            .collect()
    }
}

fn counts_for(region: &[Interval], active: &[usize], lipschitz: f64, margin: f64) -> Vec<f64> {
    let diameter = 2.0 * margin / lipschitz;
    let width = diameter / (active.len() as f64).sqrt();
    region
        .iter()
        .map(|i| if i.width() > 0.0 { (i.width() / width).ceil().max(1.0) } else { 1.0 })
        .collect()
}

/// Grid whose cell diagonal `d` satisfies `lipschitz * d / 2 <= margin`, so the
/// Lie derivative anywhere in a cell is within `margin` of its center value.
/// Fails with the smallest feasible margin when the grid would exceed `budget` cells.
pub fn build_eps_net(region: &[Interval], lipschitz: f64, margin: f64, budget: usize) -> Result<EpsNet> {
    let active = check_region(region)?;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Config(format!("Lipschitz constant must be positive and finite, got {lipschitz}")));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("margin must be positive and finite, got {margin}")));
    }
    let total = |m: f64| counts_for(region, &active, lipschitz, m).iter().product::<f64>();
    if total(margin) > budget as f64 {
        // Smallest margin whose grid fits, by bisection in log space.
        let (mut lo, mut hi) = (margin.ln(), margin.ln());
        while total(hi.exp()) > budget as f64 {
            hi += std::f64::consts::LN_2;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid.exp()) > budget as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Err(Error::GridBudget {
            budget,
            requested: margin,
            feasible: hi.exp(),
        });
    }
    let counts: Vec<usize> = counts_for(region, &active, lipschitz, margin).iter().map(|&c| c as usize).collect();
    EpsNet::from_counts(region, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_box() -> Vec<Interval> {
        vec![Interval::symmetric(1.0); 2]
    }

    #[test]
    fn lipschitz_of_constant_candidate_is_zero() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| x.iter().map(|v| -v).collect());
        let v = |_: &[f64]| 3.0;
        let est = estimate_lipschitz(&v, &sys, &unit_box(), 200, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn lipschitz_of_quadratic_on_contracting_flow() {
        // lie = -2 x^2 in the dt -> 0 limit; its Lipschitz constant on [-1, 1] is 4.
        let sys = FlowLoop::new(1, 0.01, |x: &[f64]| vec![-x[0]]);
        let v = |x: &[f64]| x[0] * x[0];
        let region = [Interval::symmetric(1.0)];
        let est = estimate_lipschitz(&v, &sys, &region, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(est.raw <= 4.0, "raw {}", est.raw);
        assert!((4.0..=8.0).contains(&est.value), "estimate {}", est.value);
    }

    #[test]
    fn more_samples_never_lower_the_estimate() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| vec![x[1], -x[0] - x[1]]);
        let v = |x: &[f64]| x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let mut previous = 0.0;
        for n in [100, 200, 400, 800] {
            let est = estimate_lipschitz(&v, &sys, &unit_box(), n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert!(est.value >= previous);
            previous = est.value;
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| x.to_vec());
        let v = |_: &[f64]| 0.0;
        let flat = [Interval::point(0.0), Interval::point(1.0)];
        assert!(estimate_lipschitz(&v, &sys, &flat, 100, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(build_eps_net(&flat, 1.0, 0.1, 100).is_err());
    }

    #[test]
    fn eps_net_sizing() {
        let net = build_eps_net(&unit_box(), 4.0, 0.2, 1_000_000).unwrap();
        assert!(net.diameter <= 0.1 + 1e-12);
        assert!(net.axes.iter().all(|a| a.cells >= 20));
        for a in &net.axes {
            assert!((a.width * a.cells as f64 - 2.0).abs() < 1e-12);
        }
        let finer = build_eps_net(&unit_box(), 4.0, 0.1, 1_000_000).unwrap();
        for (a, b) in net.axes.iter().zip(&finer.axes) {
            assert!((b.cells as i64 - 2 * a.cells as i64).abs() <= 1);
        }
    }

    #[test]
    fn budget_error_quotes_feasible_margin() {
        // Margin 2e-3 at L = 4 needs about 1.4e6 cells.
        match build_eps_net(&unit_box(), 4.0, 2e-3, 10_000) {
            Err(Error::GridBudget { budget, feasible, .. }) => {
                assert_eq!(budget, 10_000);
                let fits = build_eps_net(&unit_box(), 4.0, feasible, 10_000).unwrap();
                assert!(fits.total_cells() <= 10_000);
                assert!(build_eps_net(&unit_box(), 4.0, 0.99 * feasible, 10_000).is_err());
            }
            other => panic!("expected a budget error, got {other:?}"),
        }
    }

    #[test]
    fn zero_width_axes_are_fixed() {
        let region = [Interval::symmetric(1.0), Interval::point(0.3), Interval::new(0.0, 2.0)];
        let net = build_eps_net(&region, 2.0, 0.1, 1_000_000).unwrap();
        assert_eq!(net.axes[1].cells, 1);
        assert_eq!(net.active_axes(), vec![0, 2]);
        let last = net.total_cells() - 1;
        let c = net.center(last);
        assert_eq!(c[1], 0.3);
        assert!((c[0] - (1.0 - 0.5 * net.axes[0].width)).abs() < 1e-12);
        assert_eq!(net.multi_index(last), vec![net.axes[0].cells - 1, 0, net.axes[2].cells - 1]);
    }
}
