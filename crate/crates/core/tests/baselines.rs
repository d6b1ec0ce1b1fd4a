mod common;

use common::{obs, BUFFER};
use gdf_core::control::baselines::{HteeConfig, HteeController, HteePhase, StaticController};
use gdf_core::control::{ActionKind, Controller, Decision, TransferInfo};
use gdf_core::simnet::TickObservation;

fn info() -> TransferInfo {
    TransferInfo { id: "t1".into(), src: "a".into(), dst: "b".into(), total_bytes: 1e12, file_count: 10, mean_file_bytes: 1e11 }
}

/// Bits per joule by concurrency, best at 5.
fn ratio(cc: u32) -> f64 {
    match cc {
        1 => 1.0,
        3 => 2.0,
        5 => 3.0,
        _ => 2.5,
    }
}

#[test]
fn htee_searches_odd_levels_and_commits_to_the_best_ratio() {
    let mut h = HteeController::new(HteeConfig { limit: 8, dwell: 2, pipelining: 1, buffer: BUFFER, group: 4 });
    let Decision::Start { params, .. } = h.on_arrival(0.0, &info()) else { panic!("deferred") };
    assert_eq!(params.cc, 1);
    let mut cc = 1;
    let mut log = Vec::new();
    for k in 1..=20 {
        let mut o = obs("t1", 1e9, 0.01, 0.0);
        o.watts = 1e9 / ratio(cc);
        o.bytes_moved = 1e9 / 8.0;
        let t = TickObservation { t0: k as f64 - 1.0, t1: k as f64, transfers: vec![o], link_utilization: 0.0, link_bandwidth: 1e10, external_goodput: 0.0 };
        for a in h.on_tick(&t) {
            assert_eq!(a.kind, ActionKind::SetParams);
            assert_eq!(a.params.p, 1);
            cc = a.params.cc;
            log.push((a.reason, cc));
        }
    }
    assert_eq!(log, vec![("search", 3), ("search", 5), ("search", 7), ("commit", 5)]);
    assert_eq!(h.states["t1"].phase, HteePhase::Committed);
}

#[test]
fn static_baselines_never_act() {
    let mut s = StaticController::single_stream(BUFFER, 4);
    let Decision::Start { params, group, .. } = s.on_arrival(0.0, &info()) else { panic!("deferred") };
    assert_eq!((params.cc, params.p, params.pp, group), (1, 1, 1, 4));
    let t = TickObservation { t0: 0.0, t1: 1.0, transfers: vec![obs("t1", 1e8, 0.01, 0.5)], link_utilization: 0.0, link_bandwidth: 1e10, external_goodput: 0.0 };
    assert!(s.on_tick(&t).is_empty());
}
