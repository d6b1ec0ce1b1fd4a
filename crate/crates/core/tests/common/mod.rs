//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use gdf_core::control::ControlContext;
use gdf_core::offline::{
    solve_all, ClusterInfo, ClusterModel, FeatureScaler, SliceKey, SlaPartition, SolutionCache, Surface,
    SurfaceKind, SurfacePair,
};
use gdf_core::simnet::{Preset, ResourceGroup, TransferObservation};
use gdf_core::{ParamLimits, ParamSet, SlaKind, Utilization};

pub const BUFFER: u64 = 1 << 20;

/// Saturating throughput and a U-shaped energy over a 1,2,4,8 grid. Mean
/// power stays between roughly 200 and 240 W.
pub fn pair(scale: f64) -> SurfacePair {
    let cc = vec![1, 2, 4, 8];
    let p = vec![1, 2, 4, 8];
    let mut t = Vec::new();
    let mut e = Vec::new();
    for &c in &cc {
        for &q in &p {
            let s = (c * q) as f64;
            t.push(scale * 1e9 * (1.0 - (-s / 6.0).exp()));
            e.push((1e4 / (1.0 - (-s / 6.0).exp()) + 30.0 * s) / 5.0);
        }
    }
    let key = SliceKey { pp: 1, bs: BUFFER };
    SurfacePair::new(
        Surface::from_grids(SurfaceKind::Throughput, vec![(key, cc.clone(), p.clone(), t)], 1e9).unwrap(),
        Surface::from_grids(SurfaceKind::Energy, vec![(key, cc, p, e)], 1e9).unwrap(),
        1.25,
    )
    .unwrap()
}

pub fn center() -> [f64; 5] {
    FeatureScaler::transform_raw(&[1e8, 0.04, 10e9, BUFFER as f64, 0.1])
}

/// One cluster, three load buckets, four levels per SLA kind.
pub fn cache() -> SolutionCache {
    let parts = vec![
        SlaPartition::from_range(SlaKind::ThroughputGuarantee, 1e8, 1e9, 4),
        SlaPartition::from_range(SlaKind::TotalEnergyCap, 2e3, 4e3, 4),
        SlaPartition::from_range(SlaKind::InstantPowerCap, 240.0, 320.0, 4),
    ];
    let model = ClusterModel {
        info: ClusterInfo {
            id: 0,
            center: center(),
            reference_bytes: 1e9,
            members: 10,
            bucket_bounds: (0.1, 0.2),
            partitions: parts,
        },
        buckets: vec![pair(1.0), pair(0.8), pair(0.6)],
    };
    let (mut cache, _) = solve_all(&[model], &ParamLimits::default());
    cache.scaler = Some(FeatureScaler::fit(&[center()], [4.0, 3.0, 2.0, 1.0, 1.0]));
    cache
}

pub fn ctx() -> ControlContext {
    let mut c = ControlContext::for_config(&Preset::Xsede.config(1.0, 1));
    c.link.buffer = BUFFER;
    c
}

/// Observation with the given throughput, queuing delay and loss.
pub fn obs(id: &str, throughput: f64, delay: f64, loss: f64) -> TransferObservation {
    TransferObservation {
        id: id.to_string(),
        throughput,
        goodput: throughput,
        queuing_delay: delay,
        packet_loss_rate: loss,
        processes: vec![Utilization::default()],
        process_throughput: vec![throughput],
        watts: 100.0,
        active_seconds: 1.0,
        bytes_moved: throughput / 8.0,
        bytes_done: 0.0,
        bytes_total: 1e12,
        params: ParamSet { cc: 1, p: 1, pp: 1, bs: BUFFER },
        group: ResourceGroup { cpu_cap: 1.0, nic_cap: 10e9 },
        finished: false,
    }
}
