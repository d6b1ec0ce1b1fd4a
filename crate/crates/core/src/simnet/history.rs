use crate::domain::ParamSet;
use crate::logstore::LogBatch;

use super::model::{ExternalFlow, FileSizes, ResourceGroup, Workload};
use super::scenario::Preset;
use super::world::SimWorld;
use super::SimError;

/// Spacing of historical sessions in exported timestamps.
pub const SESSION_SECONDS: f64 = 3600.0;

/// Grid of historical runs to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryConfig {
    pub preset: Preset,
    pub seed: u64,
    pub tick: f64,
    /// Ticks logged per run.
    pub ticks: u32,
    /// External load as a fraction of link bandwidth.
    pub loads: Vec<f64>,
    pub classes: Vec<(String, Workload)>,
    pub cc: Vec<u32>,
    pub p: Vec<u32>,
    pub pp: Vec<u32>,
}

/// Small, medium and large file classes.
pub fn standard_classes() -> Vec<(String, Workload)> {
    vec![
        ("small".into(), Workload { file_count: 20_000, file_bytes: FileSizes::Uniform { lo: 1_000_000, hi: 5_000_000 } }),
        (
            "medium".into(),
            Workload { file_count: 1_000, file_bytes: FileSizes::Uniform { lo: 100_000_000, hi: 500_000_000 } },
        ),
        (
            "large".into(),
            Workload { file_count: 200, file_bytes: FileSizes::Uniform { lo: 1_000_000_000, hi: 4_000_000_000 } },
        ),
    ]
}

impl HistoryConfig {
    pub fn standard(preset: Preset, seed: u64) -> Self {
        Self {
            preset,
            seed,
            tick: 1.0,
            ticks: 30,
            loads: vec![0.0, 0.2, 0.4],
            classes: standard_classes(),
            cc: vec![1, 2, 4, 8],
            p: vec![1, 2, 4, 8],
            pp: vec![1, 8],
        }
    }

    pub fn runs(&self) -> usize {
        self.classes.len() * self.loads.len() * self.cc.len() * self.p.len() * self.pp.len()
    }
}

/// One isolated run per (class, load, cc, p, pp). Runs sharing a class and
/// load are logged back to back within one session, so a period load
/// estimate sees every parameter choice made under that load.
pub fn generate_history(cfg: &HistoryConfig) -> Result<LogBatch, SimError> {
    if cfg.ticks == 0 || cfg.runs() == 0 || !(cfg.tick > 0.0) {
        return Err(SimError::Config("history grid is empty".into()));
    }
    let per_session = cfg.cc.len() * cfg.p.len() * cfg.pp.len();
    let run_seconds = cfg.ticks as f64 * cfg.tick;
    if per_session as f64 * run_seconds >= SESSION_SECONDS {
        return Err(SimError::Config("history runs do not fit in one session".into()));
    }
    let mut records = Vec::new();
    let mut run_index = 0u64;
    let mut session = 0u64;
    for (name, workload) in &cfg.classes {
        for &load in &cfg.loads {
            if !(0.0..1.0).contains(&load) {
                return Err(SimError::Config(format!("load fraction {load} outside [0, 1)")));
            }
            let mut slot = 0u64;
            for &cc in &cfg.cc {
                for &p in &cfg.p {
                    for &pp in &cfg.pp {
                        let seed = cfg.seed ^ run_index.wrapping_mul(0x2545_F491_4F6C_DD1D);
                        let mut world = SimWorld::new(cfg.preset.config(cfg.tick, seed))?;
                        let bw = world.link.bandwidth;
                        if load > 0.0 {
                            world.external_flows.push(ExternalFlow { start: 0.0, end: f64::INFINITY, rate: load * bw });
                        }
                        let id = format!("{name}-l{}-c{cc}-p{p}-q{pp}", (load * 100.0).round() as u32);
                        world.add_transfer(&id, 0.0, *workload)?;
                        let params = ParamSet { cc, p, pp, bs: world.link.buffer };
                        world.start_transfer(&id, params, ResourceGroup { cpu_cap: 1.0, nic_cap: bw })?;
                        let epoch = session as f64 * SESSION_SECONDS + slot as f64 * run_seconds;
                        for _ in 0..cfg.ticks {
                            let obs = world.step();
                            for t in &obs.transfers {
                                records.extend(world.log_record(&obs, t, epoch));
                            }
                            if obs.transfers.iter().all(|t| t.finished) {
                                break;
                            }
                        }
                        slot += 1;
                        run_index += 1;
                    }
                }
            }
            session += 1;
        }
    }
    LogBatch::new(records, format!("simulated history seed={}", cfg.seed))
        .map_err(|e| SimError::Config(e.to_string()))
}
