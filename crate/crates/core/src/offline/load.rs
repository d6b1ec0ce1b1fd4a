use std::collections::BTreeMap;

use crate::logstore::{LogBatch, TransferLogRecord};
use crate::num::median;

/// Decomposition of link capacity not used by the observed transfer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExternalLoadEstimate {
    pub known: f64,
    pub unknown: f64,
    pub slow_start_loss: f64,
    pub congestion_loss: f64,
}

impl ExternalLoadEstimate {
    /// Closes the capacity balance `bw = T + known + unknown + δss + δc`.
    ///
    /// When the loss terms exceed the residual they are scaled down to fit;
    /// when the transfer plus known load already exceed `bw`, the known part
    /// is trimmed and the rest is zero.
    pub fn balance(bw: f64, mean_t: f64, known: f64, slow_start: f64, congestion: f64) -> Self {
        let known = known.max(0.0);
        let (slow_start, congestion) = (slow_start.max(0.0), congestion.max(0.0));
        let residual = bw - mean_t - known;
        if residual <= 0.0 {
            return Self { known: (bw - mean_t).max(0.0).min(known), ..Self::default() };
        }
        let deltas = slow_start + congestion;
        let scale = if deltas > residual { residual / deltas } else { 1.0 };
        let (slow_start, congestion) = (slow_start * scale, congestion * scale);
        Self {
            known,
            unknown: (residual - slow_start - congestion).max(0.0),
            slow_start_loss: slow_start,
            congestion_loss: congestion,
        }
    }

    /// Left-hand side of the balance for a given transfer throughput.
    pub fn accounted(&self, mean_t: f64) -> f64 {
        mean_t + self.known + self.unknown + self.slow_start_loss + self.congestion_loss
    }
}

/// Estimates unknown external traffic from one transfer's consecutive samples.
pub fn estimate_external_load(records: &[TransferLogRecord], bw: f64, known: f64) -> ExternalLoadEstimate {
    let n = records.len();
    let duration: f64 = records.iter().map(|r| r.interval).sum();
    if n == 0 || !(duration > 0.0) || !(bw > 0.0) {
        return ExternalLoadEstimate::balance(bw.max(0.0), 0.0, known, 0.0, 0.0);
    }
    let thr: Vec<f64> = records.iter().map(|r| r.achieved_throughput.max(0.0)).collect();
    let mean_t = records.iter().zip(&thr).map(|(r, t)| t * r.interval).sum::<f64>() / duration;

    // Plateau from the second half of the window; shortfall before it is first reached.
    let plateau = median(&thr[n / 2..]).unwrap_or(0.0);
    let mut slow_start = 0.0;
    for (r, t) in records.iter().zip(&thr) {
        if *t >= 0.95 * plateau {
            break;
        }
        slow_start += (plateau - t) * r.interval;
    }
    slow_start /= duration;

    // Throughput drops that coincide with loss spikes.
    let losses: Vec<f64> = records.iter().map(|r| r.packet_loss_rate).collect();
    let loss_median = median(&losses).unwrap_or(0.0);
    let mut congestion = 0.0;
    for i in 1..n {
        let plr = losses[i];
        if plr > 0.0 && plr >= 2.0 * loss_median {
            congestion += (thr[i - 1] - thr[i]).max(0.0) * records[i].interval;
        }
    }
    congestion /= duration;

    ExternalLoadEstimate::balance(bw, mean_t, known, slow_start, congestion)
}

/// Unknown external load per transfer, taken as the minimum estimate among
/// transfers whose first sample falls in the same time bin. Transfers that
/// underuse the link overstate external load, so the minimum is the most
/// informative member of a bin.
pub fn estimate_period_loads(batch: &LogBatch, bin_seconds: f64) -> BTreeMap<String, f64> {
    let mut per_transfer = Vec::new();
    for (id, range) in batch.transfers() {
        let recs = &batch.records[range];
        let bw = recs[0].bandwidth as f64;
        let est = estimate_external_load(recs, bw, 0.0);
        let bin = (recs[0].timestamp / bin_seconds).floor() as i64;
        per_transfer.push((id.to_string(), bin, est.unknown));
    }
    let mut bin_min: BTreeMap<i64, f64> = BTreeMap::new();
    for (_, bin, u) in &per_transfer {
        let e = bin_min.entry(*bin).or_insert(f64::INFINITY);
        *e = e.min(*u);
    }
    per_transfer.into_iter().map(|(id, bin, _)| (id, bin_min[&bin])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logstore::tests::sample;

    #[test]
    fn balance_algebra() {
        let e = ExternalLoadEstimate::balance(1000.0, 600.0, 200.0, 30.0, 20.0);
        assert!((e.unknown - 150.0).abs() < 1e-12);
        assert!((e.accounted(600.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn balance_overfull_link() {
        let e = ExternalLoadEstimate::balance(1000.0, 900.0, 200.0, 30.0, 0.0);
        assert_eq!(e.unknown, 0.0);
        assert!(e.accounted(900.0) <= 1000.0 + 1e-9);
    }

    #[test]
    fn constant_window_has_no_losses() {
        let recs: Vec<_> = (0..10).map(|i| sample("a", i as f64, 6e8)).collect();
        let e = estimate_external_load(&recs, 1e9, 0.0);
        assert_eq!(e.slow_start_loss, 0.0);
        assert_eq!(e.congestion_loss, 0.0);
        assert!((e.unknown - 4e8).abs() < 1e-3);
    }

    #[test]
    fn ramp_and_loss_drop_detected() {
        let thr = [2e8, 4e8, 8e8, 8e8, 5e8, 8e8, 8e8, 8e8];
        let recs: Vec<_> = thr
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut r = sample("a", i as f64, *t);
                r.packet_loss_rate = if i == 4 { 0.02 } else { 0.0 };
                r
            })
            .collect();
        let e = estimate_external_load(&recs, 1e9, 0.0);
        // Ramp shortfall (6e8 + 4e8) over 8 s; one 3e8 drop at the loss spike.
        assert!((e.slow_start_loss - 1.25e8).abs() < 1.0);
        assert!((e.congestion_loss - 3.75e7).abs() < 1.0);
    }
}
