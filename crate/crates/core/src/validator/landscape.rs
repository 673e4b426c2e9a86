use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::classify::{label_cell, CellLabel};
use super::{lie_at, ClosedLoop, EpsNet, GridAxis};
use crate::envs::Interval;
use crate::error::{Error, Result};
use crate::lyapunov::Candidate;

/// A 2-D cut through the state space: dimensions `dims` vary over `ranges`,
/// every other dimension is held at its entry in `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub dims: (usize, usize),
    pub ranges: (Interval, Interval),
    pub fixed: Vec<f64>,
    pub cells: (usize, usize),
}

impl PlaneSpec {
    /// Plane over the first two dimensions of a 2-D box.
    pub fn identity(region: &[Interval], cells: usize) -> Result<Self> {
        if region.len() != 2 {
            return Err(Error::Validator(format!(
                "identity plane needs a 2-D box, got {} dimensions",
                region.len()
            )));
        }
        Ok(Self {
            dims: (0, 1),
            ranges: (region[0], region[1]),
            fixed: vec![0.0; 2],
            cells: (cells, cells),
        })
    }

    fn validate(&self, state_dim: usize) -> Result<()> {
        let (i, j) = self.dims;
        if i == j || i >= state_dim || j >= state_dim {
            return Err(Error::Validator(format!("invalid plane dimensions ({i}, {j}) for state dimension {state_dim}")));
        }
        crate::error::check_dim("plane fixed values", state_dim, self.fixed.len())?;
        for r in [self.ranges.0, self.ranges.1] {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.hi > r.lo) {
                return Err(Error::Validator(format!("plane range [{}, {}] must be finite and nonempty", r.lo, r.hi)));
            }
        }
        if self.cells.0 < 2 || self.cells.1 < 2 {
            return Err(Error::Validator("plane needs at least 2 cells per axis".into()));
        }
        Ok(())
    }

    /// Fails when the plane leaves `domain` (ranges or fixed values).
    pub fn check_within(&self, domain: &[Interval]) -> Result<()> {
        self.validate(domain.len())?;
        let region = self.region();
        for (d, (r, dom)) in region.iter().zip(domain).enumerate() {
            if r.lo < dom.lo || r.hi > dom.hi {
                return Err(Error::Validator(format!(
                    "plane leaves the domain in dimension {d}: [{}, {}] not within [{}, {}]",
                    r.lo, r.hi, dom.lo, dom.hi
                )));
            }
        }
        Ok(())
    }

    fn region(&self) -> Vec<Interval> {
        let mut region: Vec<Interval> = self.fixed.iter().map(|&x| Interval::point(x)).collect();
        region[self.dims.0] = self.ranges.0;
        region[self.dims.1] = self.ranges.1;
        region
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    /// Line segments in plane coordinates.
    pub segments: Vec<[[f64; 2]; 2]>,
}

/// Per-cell map on a plane. Cell arrays are indexed `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub dims: (usize, usize),
    pub x_axis: GridAxis,
    pub y_axis: GridAxis,
    pub fixed: Vec<f64>,
    pub values: Vec<f64>,
    pub lies: Vec<f64>,
    pub labels: Vec<CellLabel>,
    pub a_const: f64,
    pub band: Option<(f64, f64)>,
    pub certified: bool,
    pub contours: Vec<Contour>,
    /// Band boundary curves; empty unless the band is certified.
    pub band_contours: Vec<Contour>,
}

impl Landscape {
    pub fn nx(&self) -> usize {
        self.x_axis.cells
    }

    pub fn ny(&self) -> usize {
        self.y_axis.cells
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Violating share of the in-band cells (all cells when no band is set).
    pub fn violation_fraction(&self) -> f64 {
        let violating = self.count(CellLabel::Violating);
        let in_band = violating + self.count(CellLabel::Satisfying);
        if in_band == 0 {
            0.0
        } else {
            violating as f64 / in_band as f64
        }
    }
}

pub const CONTOUR_LEVELS: usize = 10;

/// Evaluates `V` and its sampled Lie derivative on the plane and labels the
/// cells against `band` (every cell counts as in-band without one). Blue band
/// contours are drawn only when `certified` is set.
pub fn landscape_map<C: Candidate + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    plane: &PlaneSpec,
    a_const: f64,
    band: Option<(f64, f64)>,
    certified: bool,
) -> Result<Landscape> {
    plane.validate(system.state_dim())?;
    if !(a_const > 0.0) {
        return Err(Error::Config(format!("a must be positive, got {a_const}")));
    }
    let mut counts = vec![1; plane.fixed.len()];
    counts[plane.dims.0] = plane.cells.0;
    counts[plane.dims.1] = plane.cells.1;
    let net = EpsNet::from_counts(&plane.region(), &counts)?;
    let (x_axis, y_axis) = (net.axes[plane.dims.0], net.axes[plane.dims.1]);
    let (nx, ny) = plane.cells;
    let labelling_band = band.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));

    let mut values = vec![0.0; nx * ny];
    let mut lies = vec![0.0; nx * ny];
    for k in 0..net.total_cells() {
        let idx = net.multi_index(k);
        let cell = idx[plane.dims.1] * nx + idx[plane.dims.0];
        let x = net.center(k);
        let (vx, lie) = match lie_at(v, system, &x) {
            Ok((vx, lie)) => (vx, if lie.is_finite() { lie } else { f64::INFINITY }),
            Err(_) => (v.value(&x)?, f64::INFINITY),
        };
        if !vx.is_finite() {
            return Err(Error::NonFinite("candidate value on the landscape plane"));
        }
        values[cell] = vx;
        lies[cell] = lie;
    }
    let labels = values
        .iter()
        .zip(&lies)
        .map(|(&vx, &lie)| label_cell(vx, lie, a_const, labelling_band))
        .collect();

    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let contours = if vmax > vmin {
        (1..=CONTOUR_LEVELS)
            .map(|k| vmin + (vmax - vmin) * k as f64 / (CONTOUR_LEVELS + 1) as f64)
            .map(|level| marching_squares(&values, &x_axis, &y_axis, level))
            .collect()
    } else {
        Vec::new()
    };
    let band_contours = match band {
        Some((c1, c2)) if certified => vec![
            marching_squares(&values, &x_axis, &y_axis, c1),
            marching_squares(&values, &x_axis, &y_axis, c2),
        ],
        _ => Vec::new(),
    };
    Ok(Landscape {
        dims: plane.dims,
        x_axis,
        y_axis,
        fixed: plane.fixed.clone(),
        values,
        lies,
        labels,
        a_const,
        band,
        certified,
        contours,
        band_contours,
    })
}

/// Iso-line of `values` (cell centers, `iy * nx + ix`) at `level`.
/// Saddle squares are resolved by the mean of the four corners.
fn marching_squares(values: &[f64], xa: &GridAxis, ya: &GridAxis, level: f64) -> Contour {
    let (nx, ny) = (xa.cells, ya.cells);
    let at = |ix: usize, iy: usize| values[iy * nx + ix];
    let lerp = |p: [f64; 2], q: [f64; 2], vp: f64, vq: f64| {
        let t = if vq != vp { (level - vp) / (vq - vp) } else { 0.5 };
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };
    let mut segments = Vec::new();
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx.saturating_sub(1) {
            // Corners counter-clockwise from bottom-left.
            let pts = [
                [xa.center(ix), ya.center(iy)],
                [xa.center(ix + 1), ya.center(iy)],
                [xa.center(ix + 1), ya.center(iy + 1)],
                [xa.center(ix), ya.center(iy + 1)],
            ];
            let vals = [at(ix, iy), at(ix + 1, iy), at(ix + 1, iy + 1), at(ix, iy + 1)];
            let above: Vec<bool> = vals.iter().map(|&v| v >= level).collect();
            // Edge e joins corner e and corner e+1.
            let crossing = |e: usize| {
                let f = (e + 1) % 4;
                lerp(pts[e], pts[f], vals[e], vals[f])
            };
            let crossed: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            match crossed.len() {
                2 => segments.push([crossing(crossed[0]), crossing(crossed[1])]),
                4 => {
                    let center_above = vals.iter().sum::<f64>() / 4.0 >= level;
                    // Pair each edge with the neighbour that keeps the center's side connected.
                    if center_above == above[0] {
                        segments.push([crossing(0), crossing(1)]);
                        segments.push([crossing(2), crossing(3)]);
                    } else {
                        segments.push([crossing(3), crossing(0)]);
                        segments.push([crossing(1), crossing(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    Contour { level, segments }
}

const PANEL: f64 = 360.0;
const PAD: f64 = 40.0;

/// Side-by-side SVG panels: grey satisfying cells, red violating cells,
/// pale cells outside the band, black V contours, blue certified band.
pub fn render_svg(panels: &[Landscape]) -> String {
    let width = panels.len().max(1) as f64 * (PANEL + 2.0 * PAD);
    let height = PANEL + 2.0 * PAD;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, map) in panels.iter().enumerate() {
        let ox = p as f64 * (PANEL + 2.0 * PAD) + PAD;
        let (xa, ya) = (&map.x_axis, &map.y_axis);
        let sx = |x: f64| ox + (x - xa.lo) / (xa.hi - xa.lo) * PANEL;
        let sy = |y: f64| PAD + PANEL - (y - ya.lo) / (ya.hi - ya.lo) * PANEL;
        let (cw, ch) = (PANEL / map.nx() as f64, PANEL / map.ny() as f64);
        let _ = writeln!(svg, r#"<g class="cells" shape-rendering="crispEdges">"#);
        for iy in 0..map.ny() {
            for ix in 0..map.nx() {
                let fill = match map.labels[iy * map.nx() + ix] {
                    CellLabel::Satisfying => "#b0b0b0",
                    CellLabel::Violating => "#d62728",
                    CellLabel::OutsideBand => "#f2f2f2",
                };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    ox + ix as f64 * cw,
                    PAD + PANEL - (iy + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
        let _ = writeln!(svg, "</g>");
        let mut path = |contours: &[Contour], stroke: &str, w: f64, class: &str| {
            for c in contours {
                if c.segments.is_empty() {
                    continue;
                }
                let mut d = String::new();
                for [a, b] in &c.segments {
                    let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", sx(a[0]), sy(a[1]), sx(b[0]), sy(b[1]));
                }
                let _ = writeln!(
                    svg,
                    r#"<path class="{class}" data-level="{}" d="{d}" stroke="{stroke}" stroke-width="{w}" fill="none"/>"#,
                    c.level
                );
            }
        };
        path(&map.contours, "black", 0.8, "contour");
        path(&map.band_contours, "#1f4fd6", 2.0, "band");
        let _ = writeln!(
            svg,
            r#"<rect x="{ox}" y="{PAD}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">x{} vs x{}</text>"#,
            ox + PANEL / 2.0,
            PAD - 12.0,
            map.dims.0,
            map.dims.1
        );
        for (x, anchor, label) in [(ox, "start", xa.lo), (ox + PANEL, "end", xa.hi)] {
            let _ = writeln!(
                svg,
                r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{label:.3}</text>"#,
                PAD + PANEL + 14.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::FlowLoop;

    fn sq(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn plane() -> PlaneSpec {
        PlaneSpec::identity(&[Interval::symmetric(1.0); 2], 40).unwrap()
    }

    #[test]
    fn satisfying_system_is_grey_with_blue_band() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| x.iter().map(|v| -v).collect());
        let map = landscape_map(&sq, &sys, &plane(), 0.1, Some((0.05, 0.9)), true).unwrap();
        assert_eq!(map.count(CellLabel::Violating), 0);
        assert_eq!(map.contours.len(), CONTOUR_LEVELS);
        assert_eq!(map.band_contours.len(), 2);
        assert!(map.band_contours.iter().all(|c| !c.segments.is_empty()));
        let svg = render_svg(&[map]);
        assert!(svg.contains("#1f4fd6") && !svg.contains("#d62728"));
    }

    #[test]
    fn unstable_system_is_red_without_band() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| x.to_vec());
        let map = landscape_map(&sq, &sys, &plane(), 0.1, Some((0.05, 0.9)), false).unwrap();
        assert_eq!(map.count(CellLabel::Satisfying), 0);
        assert!(map.count(CellLabel::Violating) > 0);
        assert!(map.band_contours.is_empty());
        assert_eq!(map.violation_fraction(), 1.0);
        assert!(!render_svg(&[map]).contains("#1f4fd6"));
    }

    #[test]
    fn circle_contour_points_lie_on_the_level_set() {
        let sys = FlowLoop::new(2, 0.01, |x: &[f64]| x.iter().map(|v| -v).collect());
        let map = landscape_map(&sq, &sys, &plane(), 0.1, None, false).unwrap();
        for c in &map.contours {
            assert!(!c.segments.is_empty());
            for p in c.segments.iter().flatten() {
                // Linear interpolation of a quadratic over one cell width.
                assert!((sq(p) - c.level).abs() < 2.0 * 0.05 * 0.05 + 1e-12, "{p:?} level {}", c.level);
            }
        }
    }

    #[test]
    fn slice_through_higher_dimensional_state() {
        let sys = FlowLoop::new(4, 0.01, |x: &[f64]| x.iter().map(|v| -v).collect());
        let spec = PlaneSpec {
            dims: (3, 1),
            ranges: (Interval::symmetric(1.0), Interval::new(0.0, 1.0)),
            fixed: vec![0.5, 0.0, -0.5, 0.0],
            cells: (10, 5),
        };
        let map = landscape_map(&sq, &sys, &spec, 0.1, None, false).unwrap();
        // First cell: x3 = -0.9, x1 = 0.1.
        assert!((map.values[0] - (0.25 + 0.25 + 0.81 + 0.01)).abs() < 1e-12);
        // Last cell of the first row moves along x3.
        assert!((map.values[9] - (0.25 + 0.25 + 0.81 + 0.01)).abs() < 1e-12);
        assert!((map.values[10] - (0.5 + 0.81 + 0.09)).abs() < 1e-12);
        let domain = vec![Interval::symmetric(0.8); 4];
        assert!(spec.check_within(&domain).is_err());
        assert!(spec.check_within(&[Interval::symmetric(2.0); 4]).is_ok());
        let bad = PlaneSpec { dims: (1, 1), ..spec };
        assert!(landscape_map(&sq, &sys, &bad, 0.1, None, false).is_err());
    }
}
