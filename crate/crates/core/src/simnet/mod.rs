//! Fluid simulator of transfers sharing one bottleneck link.

pub mod history;
pub mod model;
pub mod run;
pub mod scenario;
pub mod world;

use thiserror::Error;

pub use history::{generate_history, HistoryConfig};
pub use model::{default_power_model, ExternalFlow, FileSizes, HostModel, LinkSpec, NetModel, ResourceGroup, Workload};
pub use run::{run, RunOptions, RunOutput, TransferSummary};
pub use scenario::{Preset, Scenario};
pub use world::{SimConfig, SimWorld, TickObservation, TransferObservation, TransferState, TransferStatus};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown or inactive transfer '{0}'")]
    UnknownTransfer(String),
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::baselines::StaticController;
    use crate::domain::ParamSet;
    use crate::logstore::LogBatch;

    fn config(bw: f64, rtt: f64, seed: u64) -> SimConfig {
        let mut c = Preset::Xsede.config(1.0, seed);
        c.link.bandwidth = bw;
        c.link.rtt = rtt;
        c
    }

    fn world_with(cfg: SimConfig, workloads: &[Workload]) -> SimWorld {
        let mut w = SimWorld::new(cfg).unwrap();
        for (i, wl) in workloads.iter().enumerate() {
            w.add_transfer(&format!("t{}", i + 1), 0.0, *wl).unwrap();
        }
        w
    }

    fn big() -> Workload {
        Workload { file_count: 4, file_bytes: FileSizes::Fixed(50_000_000_000) }
    }

    fn run_static(w: &mut SimWorld, params: ParamSet, secs: f64) -> RunOutput {
        let groups = ResourceGroup::ladder(w.link.bandwidth);
        let mut c = StaticController::new(params, groups.len() - 1);
        run(w, &mut c, &groups, &RunOptions::new(secs))
    }

    #[test]
    fn uncontended_single_stream_reaches_its_bound() {
        let cfg = config(10e9, 0.04, 1);
        let bound = cfg.net.stream_cap.min(cfg.link.bottleneck());
        let mut w = world_with(cfg, &[big()]);
        let out = run_static(&mut w, ParamSet::new(1, 1, 1, 32 << 20).unwrap(), 20.0);
        let last = out.trace.last().unwrap().transfer("t1").unwrap().throughput;
        assert!((last - bound).abs() / bound < 1e-9, "{last} vs {bound}");
    }

    #[test]
    fn pipelining_hides_per_file_gaps() {
        let wl = Workload { file_count: 100, file_bytes: FileSizes::Fixed(1_000_000) };
        let finish = |pp: u32| {
            let mut w = world_with(config(10e9, 0.1, 3), &[wl]);
            let out = run_static(&mut w, ParamSet::new(1, 1, pp, 32 << 20).unwrap(), 200.0);
            let t = w.transfer("t1").unwrap();
            assert!(t.finished_at.is_some());
            (out.summaries[0].seconds, t.idle_seconds)
        };
        let (slow, idle1) = finish(1);
        let (fast, idle10) = finish(10);
        assert!(idle1 - idle10 >= 99.0 * 0.1 - 1e-6, "idle {idle1} vs {idle10}");
        assert!(slow - fast >= 0.9 * 99.0 * 0.1, "completion {slow} vs {fast}");
    }

    #[test]
    fn symmetric_transfers_share_fairly() {
        let mut w = world_with(config(10e9, 0.04, 5), &[big(), big()]);
        let out = run_static(&mut w, ParamSet::new(4, 8, 1, 32 << 20).unwrap(), 120.0);
        let mean = |id: &str| {
            let v: Vec<f64> = out.trace[20..].iter().map(|o| o.transfer(id).unwrap().goodput).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, b) = (mean("t1"), mean("t2"));
        assert!((a - b).abs() / a.max(b) < 0.05, "{a} vs {b}");
    }

    #[test]
    fn nic_cap_bounds_throughput() {
        let cfg = config(10e9, 0.04, 2);
        let mut w = world_with(cfg, &[big()]);
        let group = ResourceGroup { cpu_cap: 1.0, nic_cap: 1e9 };
        w.start_transfer("t1", ParamSet::new(4, 4, 1, 32 << 20).unwrap(), group).unwrap();
        for _ in 0..20 {
            let o = w.step();
            assert!(o.transfer("t1").unwrap().throughput <= 1e9 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn streams_change_next_tick() {
        let mut w = world_with(config(10e9, 0.04, 2), &[big()]);
        let full = ResourceGroup { cpu_cap: 1.0, nic_cap: 10e9 };
        w.start_transfer("t1", ParamSet::new(1, 1, 1, 32 << 20).unwrap(), full).unwrap();
        w.step();
        w.apply_params("t1", ParamSet::new(2, 2, 1, 32 << 20).unwrap()).unwrap();
        assert_eq!(w.transfer("t1").unwrap().params.streams(), 1);
        let o = w.step();
        assert_eq!(o.transfer("t1").unwrap().params.streams(), 4);
    }

    #[test]
    fn unknown_transfer_is_rejected() {
        let mut w = world_with(config(10e9, 0.04, 2), &[big()]);
        let p = ParamSet::new(1, 1, 1, 1 << 20).unwrap();
        assert!(matches!(w.apply_params("nope", p), Err(SimError::UnknownTransfer(_))));
        // Registered but not started.
        assert!(matches!(w.apply_params("t1", p), Err(SimError::UnknownTransfer(_))));
        let g = ResourceGroup { cpu_cap: 1.0, nic_cap: 1e9 };
        assert!(matches!(w.apply_group("nope", g), Err(SimError::UnknownTransfer(_))));
    }

    #[test]
    fn empty_world_still_ticks() {
        let mut w = world_with(config(10e9, 0.04, 2), &[]);
        let out = run_static(&mut w, ParamSet::new(1, 1, 1, 1 << 20).unwrap(), 7.0);
        assert_eq!(out.trace.len(), 7);
        assert!(out.logs.is_empty());
        assert!((w.clock - 7.0).abs() < 1e-12);
    }

    fn contended(seed: u64) -> RunOutput {
        let mut w = world_with(config(10e9, 0.04, seed), &[big(), big(), big()]);
        w.external_flows.push(ExternalFlow { start: 5.0, end: 25.0, rate: 3e9 });
        run_static(&mut w, ParamSet::new(8, 8, 2, 32 << 20).unwrap(), 40.0)
    }

    #[test]
    fn runs_are_deterministic() {
        let (a, b) = (contended(11), contended(11));
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.logs.export(), b.logs.export());
        assert_ne!(contended(12).trace, a.trace);
    }

    #[test]
    fn exported_logs_round_trip() {
        let out = contended(4);
        let text = out.logs.export();
        let back = LogBatch::parse(&text, "again").unwrap();
        assert_eq!(back.records, out.logs.records);
    }

    #[test]
    fn capacity_eq5_and_energy_hold_under_overload() {
        let out = contended(7);
        for o in &out.trace {
            let sum: f64 = o.transfers.iter().map(|t| t.goodput).sum::<f64>() + o.external_goodput;
            assert!(sum <= o.link_bandwidth * (1.0 + 1e-9), "{sum}");
            for t in &o.transfers {
                assert!(t.throughput <= 10e9f64.min(16e9).min(12e9) * (1.0 + 1e-9));
                assert!(t.watts >= 0.0);
            }
        }
        for (id, acc) in &out.energy {
            let per_tick: f64 = out.trace.iter().filter_map(|o| o.transfer(id)).map(|t| t.watts * t.active_seconds).sum();
            assert!((acc.integral() - per_tick).abs() <= 1e-6 * per_tick.max(1.0));
            assert!((acc.joules_total - per_tick).abs() <= 1e-6 * per_tick.max(1.0));
        }
    }

    #[test]
    fn history_grid_covers_every_point() {
        let mut cfg = HistoryConfig::standard(Preset::Ibm, 1);
        cfg.ticks = 3;
        cfg.classes.truncate(1);
        cfg.loads = vec![0.0, 0.3];
        let batch = generate_history(&cfg).unwrap();
        assert_eq!(batch.transfers().len(), cfg.runs());
        assert!(batch.len() <= 3 * cfg.runs());
    }
}
