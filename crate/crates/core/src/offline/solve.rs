use std::cmp::Ordering;

use crate::domain::{ParamLimits, ParamSet, SlaKind, SlaSpec};

use super::surface::{SliceKey, Surface};
use super::OfflineError;

/// Predictions the solver needs at an integer grid point.
pub trait SurfaceModel {
    fn slice_keys(&self) -> Vec<SliceKey>;
    fn throughput(&self, slice: usize, cc: u32, p: u32) -> f64;
    fn energy(&self, slice: usize, cc: u32, p: u32) -> f64;
    fn peak_power(&self, slice: usize, cc: u32, p: u32) -> f64;
}

/// Matching throughput and energy surfaces of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePair {
    pub throughput: Surface,
    pub energy: Surface,
    /// Ratio of peak to mean power.
    pub peak_factor: f64,
}

impl SurfacePair {
    pub fn new(throughput: Surface, energy: Surface, peak_factor: f64) -> Result<Self, OfflineError> {
        if throughput.slice_keys != energy.slice_keys {
            return Err(OfflineError::SliceMismatch);
        }
        Ok(Self { throughput, energy, peak_factor })
    }

    pub fn reference_bytes(&self) -> f64 {
        self.energy.reference_bytes
    }
}

impl SurfaceModel for SurfacePair {
    fn slice_keys(&self) -> Vec<SliceKey> {
        self.throughput.slice_keys.clone()
    }

    fn throughput(&self, slice: usize, cc: u32, p: u32) -> f64 {
        self.throughput.eval(slice, cc as f64, p as f64).max(0.0)
    }

    fn energy(&self, slice: usize, cc: u32, p: u32) -> f64 {
        self.energy.eval(slice, cc as f64, p as f64).max(0.0)
    }

    /// Mean power over the predicted duration, scaled by the peak factor.
    fn peak_power(&self, slice: usize, cc: u32, p: u32) -> f64 {
        let bits = self.energy.reference_bytes * 8.0;
        let t = self.throughput(slice, cc, p);
        if !(bits > 0.0) || !(t > 0.0) {
            return f64::INFINITY;
        }
        self.peak_factor * self.energy(slice, cc, p) * t / bits
    }
}

/// Chosen parameters with the surfaces' predictions for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub params: ParamSet,
    pub predicted_t: f64,
    pub predicted_e: f64,
}

/// Exhaustive constrained search over the integer grid and every slice whose
/// pipelining depth is within limits.
///
/// Ties on the objective go to fewer total streams, then lower cc, then the
/// earlier slice.
pub fn solve_sla(model: &impl SurfaceModel, sla: &SlaSpec, limits: &ParamLimits) -> Result<Solution, OfflineError> {
    let keys = model.slice_keys();
    let mut best: Option<(f64, u32, u32, usize, Solution)> = None;
    for (s, key) in keys.iter().enumerate() {
        if key.pp > limits.pp_max {
            continue;
        }
        for cc in 1..=limits.cc_limit {
            for p in 1..=limits.p_limit {
                let t = model.throughput(s, cc, p);
                let e = model.energy(s, cc, p);
                let (feasible, objective) = match sla.kind {
                    SlaKind::ThroughputGuarantee => (t >= sla.value, e),
                    SlaKind::TotalEnergyCap => (e <= sla.value, -t),
                    SlaKind::InstantPowerCap => (model.peak_power(s, cc, p) <= sla.value, -t),
                };
                if !feasible || objective.is_nan() {
                    continue;
                }
                let cand = (objective, cc * p, cc, s);
                let better = match &best {
                    None => true,
                    Some((o, st, c, sl, _)) => {
                        let ord = cand.0.partial_cmp(o).unwrap_or(Ordering::Equal);
                        ord == Ordering::Less || (ord == Ordering::Equal && (cand.1, cand.2, cand.3) < (*st, *c, *sl))
                    }
                };
                if better {
                    let params = ParamSet { cc, p, pp: key.pp, bs: key.bs };
                    best = Some((objective, cc * p, cc, s, Solution { params, predicted_t: t, predicted_e: e }));
                }
            }
        }
    }
    best.map(|b| b.4).ok_or(OfflineError::Infeasible(format!("{} <= {}", sla.kind, sla.value)))
}
