use std::collections::{BTreeMap, BTreeSet};

use crate::logstore::TransferLogRecord;
use crate::num::median;
use crate::Spline2;

use super::OfflineError;

/// Discrete slice coordinates of a surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceKey {
    pub pp: u32,
    pub bs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    /// Mean throughput in bits/s.
    Throughput,
    /// Joules to move `reference_bytes`.
    Energy,
}

/// One slice on a grid: cc knots, p knots and values row-major in cc.
pub type GridSlice = (SliceKey, Vec<u32>, Vec<u32>, Vec<f64>);

/// Interpolant over `(cc, p)` for each `(pp, bs)` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub kind: SurfaceKind,
    /// Union of the cc knots of all slices.
    pub knots_cc: Vec<u32>,
    /// Union of the p knots of all slices.
    pub knots_p: Vec<u32>,
    pub slice_keys: Vec<SliceKey>,
    pub slices: Vec<Spline2>,
    /// Dataset size the energy values refer to.
    pub reference_bytes: f64,
}

impl Surface {
    /// Builds a surface from complete per-slice grids `(cc knots, p knots, values)`
    /// with values row-major in cc.
    pub fn from_grids(
        kind: SurfaceKind,
        slices: Vec<GridSlice>,
        reference_bytes: f64,
    ) -> Result<Self, OfflineError> {
        let mut knots_cc = BTreeSet::new();
        let mut knots_p = BTreeSet::new();
        let mut keys = Vec::new();
        let mut splines = Vec::new();
        for (key, cc, p, values) in slices {
            if cc.len() < 4 || p.len() < 4 {
                return Err(OfflineError::InsufficientGrid { pp: key.pp, bs: key.bs, cc: cc.len(), p: p.len() });
            }
            knots_cc.extend(cc.iter().copied());
            knots_p.extend(p.iter().copied());
            let xs = cc.iter().map(|&v| v as f64).collect();
            let ys = p.iter().map(|&v| v as f64).collect();
            splines.push(Spline2::new(xs, ys, values)?);
            keys.push(key);
        }
        if keys.is_empty() {
            return Err(OfflineError::InsufficientGrid { pp: 0, bs: 0, cc: 0, p: 0 });
        }
        Ok(Self {
            kind,
            knots_cc: knots_cc.into_iter().collect(),
            knots_p: knots_p.into_iter().collect(),
            slice_keys: keys,
            slices: splines,
            reference_bytes,
        })
    }

    pub fn slice_index(&self, key: SliceKey) -> Option<usize> {
        self.slice_keys.iter().position(|k| *k == key)
    }

    /// Interpolated value on slice `slice`, clamped to its knot hull.
    pub fn eval(&self, slice: usize, cc: f64, p: f64) -> f64 {
        self.slices[slice].eval(cc, p)
    }
}

/// Median dataset size over the distinct transfers in `records`.
pub fn reference_bytes(records: &[&TransferLogRecord]) -> f64 {
    let mut per: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records {
        per.insert(&r.transfer_id, r.dataset.total_bytes as f64);
    }
    let sizes: Vec<f64> = per.into_values().collect();
    median(&sizes).unwrap_or(0.0)
}

/// Fits a throughput or energy surface to cluster members.
///
/// Replicates at a grid point are averaged. Energy at a point is the mean
/// power times the time needed to move the cluster's reference dataset at the
/// point's mean throughput.
pub fn fit_surface(records: &[&TransferLogRecord], kind: SurfaceKind) -> Result<Surface, OfflineError> {
    let reference = reference_bytes(records);
    // slice -> (cc, p) -> (sum thr, sum pw, count)
    let mut acc: BTreeMap<SliceKey, BTreeMap<(u32, u32), (f64, f64, usize)>> = BTreeMap::new();
    for r in records {
        let key = SliceKey { pp: r.params.pp, bs: r.params.bs };
        let cell = acc.entry(key).or_default().entry((r.params.cc, r.params.p)).or_insert((0.0, 0.0, 0));
        cell.0 += r.achieved_throughput;
        cell.1 += r.measured_power;
        cell.2 += 1;
    }
    let mut slices = Vec::new();
    for (key, cells) in acc {
        let cc: Vec<u32> = cells.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
        let p: Vec<u32> = cells.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
        if cc.len() < 4 || p.len() < 4 || cells.len() != cc.len() * p.len() {
            return Err(OfflineError::InsufficientGrid { pp: key.pp, bs: key.bs, cc: cc.len(), p: p.len() });
        }
        let mut values = Vec::with_capacity(cells.len());
        for &c in &cc {
            for &q in &p {
                let (t, w, n) = cells[&(c, q)];
                let (t, w) = (t / n as f64, w / n as f64);
                values.push(match kind {
                    SurfaceKind::Throughput => t,
                    SurfaceKind::Energy => reference * 8.0 * w / t.max(1.0),
                });
            }
        }
        slices.push((key, cc, p, values));
    }
    Surface::from_grids(kind, slices, reference)
}
