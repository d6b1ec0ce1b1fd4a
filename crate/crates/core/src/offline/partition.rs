use std::collections::BTreeMap;

use crate::domain::SlaKind;
use crate::logstore::{LogBatch, TransferLogRecord};

use super::surface::reference_bytes;
use super::OfflineError;

/// Discrete SLA levels over the historically observed range.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaPartition {
    pub kind: SlaKind,
    pub levels: Vec<f64>,
    pub feasible_min: f64,
    pub feasible_max: f64,
}

impl SlaPartition {
    /// `k` equal-width bins over `[lo, hi]`, one level at each bin midpoint.
    /// A zero-width range yields a single level.
    pub fn from_range(kind: SlaKind, lo: f64, hi: f64, k: usize) -> Self {
        let k = if hi > lo { k.max(1) } else { 1 };
        let width = (hi - lo) / k as f64;
        let levels = (0..k).map(|i| lo + width * (i as f64 + 0.5)).collect();
        Self { kind, levels, feasible_min: lo, feasible_max: hi }
    }

    /// Level serving a requested SLA value, or `None` outside the feasible range.
    ///
    /// Throughput maps to the lowest level at or above the request (the top
    /// level if none); energy and power map to the highest level at or below
    /// the request (the bottom level if none).
    pub fn level_for(&self, value: f64) -> Option<usize> {
        if !(value >= self.feasible_min && value <= self.feasible_max) {
            return None;
        }
        let top = self.levels.len() - 1;
        Some(match self.kind {
            SlaKind::ThroughputGuarantee => self.levels.iter().position(|l| *l >= value).unwrap_or(top),
            _ => self.levels.iter().rposition(|l| *l <= value).unwrap_or(0),
        })
    }
}

/// Historical per-transfer value of the quantity an SLA kind constrains:
/// mean throughput, energy normalised to `reference` bytes, or peak power.
pub fn transfer_quantity(records: &[&TransferLogRecord], kind: SlaKind, reference: f64) -> Option<f64> {
    let duration: f64 = records.iter().map(|r| r.interval).sum();
    if records.is_empty() || !(duration > 0.0) {
        return None;
    }
    let mean = |f: fn(&TransferLogRecord) -> f64| records.iter().map(|r| f(r) * r.interval).sum::<f64>() / duration;
    let v = match kind {
        SlaKind::ThroughputGuarantee => mean(|r| r.achieved_throughput),
        SlaKind::TotalEnergyCap => {
            let t = mean(|r| r.achieved_throughput);
            if !(t > 0.0) {
                return None;
            }
            reference * 8.0 * mean(|r| r.measured_power) / t
        }
        SlaKind::InstantPowerCap => records.iter().map(|r| r.measured_power).fold(f64::NAN, f64::max),
    };
    v.is_finite().then_some(v)
}

/// Partitions the feasible range of `kind` over the given records.
pub fn partition_records(records: &[&TransferLogRecord], kind: SlaKind, k: usize) -> Result<SlaPartition, OfflineError> {
    let reference = reference_bytes(records);
    let mut per: BTreeMap<&str, Vec<&TransferLogRecord>> = BTreeMap::new();
    for r in records {
        per.entry(&r.transfer_id).or_default().push(r);
    }
    let values: Vec<f64> = per.values().filter_map(|rs| transfer_quantity(rs, kind, reference)).collect();
    if values.is_empty() {
        return Err(OfflineError::NoHistory(kind));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SlaPartition::from_range(kind, lo, hi, k))
}

pub fn partition_sla(batch: &LogBatch, kind: SlaKind, k: usize) -> Result<SlaPartition, OfflineError> {
    let refs: Vec<&TransferLogRecord> = batch.records.iter().collect();
    partition_records(&refs, kind, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logstore::tests::sample;

    #[test]
    fn equal_width_midpoints() {
        let recs: Vec<_> = [100e6, 900e6, 500e6]
            .iter()
            .enumerate()
            .map(|(i, t)| sample(&format!("t{i}"), 0.0, *t))
            .collect();
        let batch = LogBatch::new(recs, "t").unwrap();
        let p = partition_sla(&batch, SlaKind::ThroughputGuarantee, 4).unwrap();
        assert_eq!(p.levels, vec![200e6, 400e6, 600e6, 800e6]);
        let one = partition_sla(&batch, SlaKind::ThroughputGuarantee, 1).unwrap();
        assert_eq!(one.levels, vec![500e6]);
    }

    #[test]
    fn out_of_range_is_infeasible() {
        let p = SlaPartition::from_range(SlaKind::ThroughputGuarantee, 100.0, 900.0, 4);
        assert_eq!(p.level_for(50.0), None);
        assert_eq!(p.level_for(950.0), None);
        assert_eq!(p.level_for(350.0), Some(1));
        assert_eq!(p.level_for(850.0), Some(3));
        let e = SlaPartition::from_range(SlaKind::TotalEnergyCap, 100.0, 900.0, 4);
        assert_eq!(e.level_for(350.0), Some(0));
        assert_eq!(e.level_for(150.0), Some(0));
        assert_eq!(e.level_for(900.0), Some(3));
    }

    #[test]
    fn no_history() {
        let mut r = sample("a", 0.0, 0.0);
        r.achieved_throughput = 0.0;
        let batch = LogBatch::new(vec![r], "t").unwrap();
        assert!(matches!(partition_sla(&batch, SlaKind::TotalEnergyCap, 3), Err(OfflineError::NoHistory(_))));
    }
}
