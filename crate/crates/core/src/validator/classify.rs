use serde::{Deserialize, Serialize};

use super::{lie_at, ClosedLoop, EpsNet};
use crate::error::{Error, Result};
use crate::lyapunov::Candidate;

/// Candidate value and sampled Lie derivative at every cell center. A failed
/// closed-loop step is recorded as `lie = +inf` so it classifies as violating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellField {
    pub net: EpsNet,
    pub values: Vec<f64>,
    pub lies: Vec<f64>,
    /// `V >= -1e-6` at every center.
    pub positivity_ok: bool,
    pub value_at_origin: f64,
    /// `V(origin) <= 1e-3 * max V`.
    pub origin_ok: bool,
    pub failed_steps: usize,
}

pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
pub const ORIGIN_TOLERANCE: f64 = 1e-3;

pub fn evaluate_cells<C: Candidate + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    net: &EpsNet,
    origin: &[f64],
) -> Result<CellField> {
    crate::error::check_dim("cell grid", system.state_dim(), net.dim())?;
    let n = net.total_cells();
    let mut values = Vec::with_capacity(n);
    let mut lies = Vec::with_capacity(n);
    let mut failed_steps = 0;
    for k in 0..n {
        let x = net.center(k);
        match lie_at(v, system, &x) {
            Ok((vx, lie)) if vx.is_finite() => {
                values.push(vx);
                lies.push(if lie.is_finite() { lie } else { f64::INFINITY });
            }
            Ok(_) => return Err(Error::NonFinite("candidate value at a cell center")),
            Err(_) => {
                values.push(v.value(&x)?);
                lies.push(f64::INFINITY);
                failed_steps += 1;
            }
        }
    }
    let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value_at_origin = v.value(origin)?;
    Ok(CellField {
        net: net.clone(),
        positivity_ok: values.iter().all(|&x| x >= -POSITIVITY_TOLERANCE),
        origin_ok: value_at_origin.abs() <= ORIGIN_TOLERANCE * max_value.max(0.0),
        value_at_origin,
        values,
        lies,
        failed_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellLabel {
    Satisfying,
    Violating,
    OutsideBand,
}

impl CellLabel {
    pub fn code(self) -> u8 {
        match self {
            CellLabel::Satisfying => 0,
            CellLabel::Violating => 1,
            CellLabel::OutsideBand => 2,
        }
    }
}

/// Label of one cell: inside the band it violates when `lie >= -a V`.
pub fn label_cell(value: f64, lie: f64, a_const: f64, band: (f64, f64)) -> CellLabel {
    if value < band.0 || value > band.1 {
        CellLabel::OutsideBand
    } else if lie >= -a_const * value {
        CellLabel::Violating
    } else {
        CellLabel::Satisfying
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellClassification {
    pub field: CellField,
    pub labels: Vec<CellLabel>,
    pub band: (f64, f64),
    pub a_const: f64,
}

impl CellClassification {
    pub fn from_field(field: CellField, a_const: f64, band: (f64, f64)) -> Result<Self> {
        if !(band.0 < band.1) {
            return Err(Error::Config(format!("band must satisfy c1 < c2, got {band:?}")));
        }
        if !(a_const > 0.0) {
            return Err(Error::Config(format!("a must be positive, got {a_const}")));
        }
        let labels = field
            .values
            .iter()
            .zip(&field.lies)
            .map(|(&v, &l)| label_cell(v, l, a_const, band))
            .collect();
        Ok(Self {
            field,
            labels,
            band,
            a_const,
        })
    }

    pub fn violating_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == CellLabel::Violating).collect()
    }

    pub fn components(&self) -> Vec<Component> {
        connected_components(&self.field.net, &self.violating_mask())
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

pub fn classify_cells<C: Candidate + ?Sized>(
    v: &C,
    system: &dyn ClosedLoop,
    net: &EpsNet,
    origin: &[f64],
    a_const: f64,
    band: (f64, f64),
) -> Result<CellClassification> {
    CellClassification::from_field(evaluate_cells(v, system, net, origin)?, a_const, band)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub cells: usize,
    pub volume: f64,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Face-connected components of the masked cells (each cell has up to two
/// neighbours per nonzero-width axis). Components are ordered by their first cell.
pub fn connected_components(net: &EpsNet, mask: &[bool]) -> Vec<Component> {
    let marked: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    if marked.is_empty() {
        return Vec::new();
    }
    let mut slot = vec![u32::MAX; mask.len()];
    for (j, &k) in marked.iter().enumerate() {
        slot[k] = j as u32;
    }
    let strides = net.strides();
    let mut uf = UnionFind::new(marked.len());
    for (j, &k) in marked.iter().enumerate() {
        let idx = net.multi_index(k);
        for (d, axis) in net.axes.iter().enumerate() {
            // Forward neighbours only; each face is visited once.
            if idx[d] + 1 < axis.cells {
                let other = slot[k + strides[d]];
                if other != u32::MAX {
                    uf.union(j as u32, other);
                }
            }
        }
    }
    let cell_volume = net.cell_volume();
    let mut order: Vec<u32> = Vec::new();
    let mut comp_of_root = std::collections::HashMap::new();
    let mut comps: Vec<Component> = Vec::new();
    for (j, &k) in marked.iter().enumerate() {
        let root = uf.find(j as u32);
        let id = *comp_of_root.entry(root).or_insert_with(|| {
            order.push(root);
            comps.push(Component {
                cells: 0,
                volume: 0.0,
                bbox_lo: vec![f64::INFINITY; net.dim()],
                bbox_hi: vec![f64::NEG_INFINITY; net.dim()],
            });
            comps.len() - 1
        });
        let c = &mut comps[id];
        c.cells += 1;
        for (d, &i) in net.multi_index(k).iter().enumerate() {
            let axis = &net.axes[d];
            let lo = axis.lo + i as f64 * axis.width;
            c.bbox_lo[d] = c.bbox_lo[d].min(lo);
            c.bbox_hi[d] = c.bbox_hi[d].max(lo + axis.width);
        }
    }
    for c in comps.iter_mut() {
        c.volume = c.cells as f64 * cell_volume;
    }
    comps
}
