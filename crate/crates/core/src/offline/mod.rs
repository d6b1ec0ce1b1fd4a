//! Offline analysis: external-load estimation, clustering, surface fitting,
//! SLA partitioning and the precomputed solution cache.

mod cache;
mod cluster;
mod load;
mod partition;
mod solve;
mod surface;

pub use cache::{
    lookup, solve_all, CacheEntry, CacheKey, ClusterInfo, ClusterModel, CostModel, LoadBucket, OfflineCostReport,
    SolutionCache,
};
pub use cluster::{
    cluster_logs, cluster_with_loads, cut_merges, transfer_features, ward_merges, Cluster, ClusterConfig,
    FeatureScaler, Merge, CLUSTER_FEATURES,
};
pub use load::{estimate_external_load, estimate_period_loads, ExternalLoadEstimate};
pub use partition::{partition_records, partition_sla, transfer_quantity, SlaPartition};
pub use solve::{solve_sla, Solution, SurfaceModel, SurfacePair};
pub use surface::{fit_surface, reference_bytes, GridSlice, SliceKey, Surface, SurfaceKind};

use std::time::Instant;

use thiserror::Error;

use crate::domain::{ParamLimits, SlaKind};
use crate::logstore::{LogBatch, TransferLogRecord};
use crate::spline::SplineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("no historical {0} values")]
    NoHistory(SlaKind),
    #[error("slice pp={pp} bs={bs} has a {cc}x{p} grid; need a full grid of at least 4x4")]
    InsufficientGrid { pp: u32, bs: u64, cc: usize, p: usize },
    #[error("throughput and energy surfaces have different slices")]
    SliceMismatch,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("cache line {line}: {msg}")]
    CacheFormat { line: usize, msg: String },
    #[error("spline: {0}")]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    pub max_clusters: usize,
    /// Levels per SLA kind.
    pub levels: usize,
    pub limits: ParamLimits,
    pub cluster: ClusterConfig,
    pub peak_factor: f64,
    pub cost: CostModel,
    /// Transfers expected to be served from the cache.
    pub amortization_count: u64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            max_clusters: 3,
            levels: 10,
            limits: ParamLimits::default(),
            cluster: ClusterConfig::default(),
            peak_factor: 1.25,
            cost: CostModel::default(),
            amortization_count: 0,
        }
    }
}

/// Result of the full offline pipeline.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cache: SolutionCache,
    pub clusters: Vec<Cluster>,
    /// Clusters skipped because no surface could be fitted, with the reason.
    pub skipped: Vec<(u32, OfflineError)>,
    /// Wall-clock time of the run; not part of the cache file.
    pub measured_seconds: f64,
}

/// Terciles of a set of values as `(1/3, 2/3)` order statistics.
fn terciles(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    (values[(n - 1) / 3], values[2 * (n - 1) / 3])
}

fn fit_pair(records: &[&TransferLogRecord], peak_factor: f64) -> Result<SurfacePair, OfflineError> {
    SurfacePair::new(
        fit_surface(records, SurfaceKind::Throughput)?,
        fit_surface(records, SurfaceKind::Energy)?,
        peak_factor,
    )
}

/// Cleaned batch → clusters → per-bucket surfaces and partitions → cache.
pub fn analyze(batch: &LogBatch, config: &OfflineConfig) -> Result<Analysis, OfflineError> {
    let started = Instant::now();
    let loads = estimate_period_loads(batch, config.cluster.load_bin_seconds);
    let (clusters, scaler, centers) = cluster_with_loads(batch, config.max_clusters, &loads, &config.cluster);

    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for (cluster, center) in clusters.iter().zip(&centers) {
        let members: Vec<&TransferLogRecord> = cluster.member_records.iter().map(|&i| &batch.records[i]).collect();
        let whole = match fit_pair(&members, config.peak_factor) {
            Ok(p) => p,
            Err(e) => {
                skipped.push((cluster.id, e));
                continue;
            }
        };
        let load_of = |r: &TransferLogRecord| loads.get(&r.transfer_id).copied().unwrap_or(0.0) / r.bandwidth as f64;
        let mut per_transfer: Vec<f64> = {
            let mut seen = std::collections::BTreeMap::new();
            for r in &members {
                seen.insert(r.transfer_id.as_str(), load_of(r));
            }
            seen.into_values().collect()
        };
        let bounds = terciles(&mut per_transfer);
        let mut partitions = Vec::with_capacity(3);
        for kind in SlaKind::ALL {
            partitions.push(partition_records(&members, kind, config.levels)?);
        }
        let info = ClusterInfo {
            id: cluster.id,
            center: *center,
            reference_bytes: whole.reference_bytes(),
            members: members.len(),
            bucket_bounds: bounds,
            partitions,
        };
        let mut buckets = Vec::with_capacity(3);
        for bucket in LoadBucket::ALL {
            let subset: Vec<&TransferLogRecord> =
                members.iter().copied().filter(|r| info.bucket_for(load_of(r)) == bucket).collect();
            // Energy surfaces must share the cluster's reference size.
            let pair = fit_pair(&subset, config.peak_factor).and_then(|mut p| {
                let scale = whole.reference_bytes() / p.reference_bytes();
                for s in &mut p.energy.slices {
                    *s = rescale(s, scale)?;
                }
                p.energy.reference_bytes = whole.reference_bytes();
                Ok(p)
            });
            buckets.push(pair.unwrap_or_else(|_| whole.clone()));
        }
        models.push(ClusterModel { info, buckets });
    }

    let (mut cache, evals) = solve_all(&models, &config.limits);
    cache.scaler = Some(scaler);
    let seconds = batch.len() as f64 * config.cost.seconds_per_record + evals as f64 * config.cost.seconds_per_eval;
    cache.cost = OfflineCostReport {
        analysis_joules: seconds * config.cost.watts,
        analysis_seconds: seconds,
        amortization_count: config.amortization_count,
    };
    Ok(Analysis { cache, clusters, skipped, measured_seconds: started.elapsed().as_secs_f64() })
}

fn rescale(s: &crate::Spline2, factor: f64) -> Result<crate::Spline2, OfflineError> {
    let (nx, ny) = (s.xs().len(), s.ys().len());
    let values = (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).map(|(i, j)| s.knot_value(i, j) * factor).collect();
    Ok(crate::Spline2::new(s.xs().to_vec(), s.ys().to_vec(), values)?)
}
