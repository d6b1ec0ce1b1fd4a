use crate::control::{Action, ActionKind, Controller, Decision, TransferInfo};
use crate::domain::EnergyAccount;
use crate::logstore::{LogBatch, TransferLogRecord};

use super::model::ResourceGroup;
use super::world::{SimWorld, TickObservation, TransferStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub duration: f64,
    /// End early once every transfer has finished.
    pub stop_when_idle: bool,
    /// Added to simulated time in exported log timestamps.
    pub epoch: f64,
}

impl RunOptions {
    pub fn new(duration: f64) -> Self {
        Self { duration, stop_when_idle: false, epoch: 0.0 }
    }
}

/// One row of the per-transfer summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSummary {
    pub id: String,
    pub bytes: f64,
    pub total_bytes: f64,
    pub seconds: f64,
    pub joules: f64,
    pub mean_throughput: f64,
    pub finished: bool,
}

impl TransferSummary {
    pub const CSV_HEADER: &'static str = "id,bytes,seconds,joules,mean_throughput";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.id, self.bytes, self.seconds, self.joules, self.mean_throughput)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TickObservation>,
    pub logs: LogBatch,
    pub energy: Vec<(String, EnergyAccount)>,
    pub actions: Vec<Action>,
    pub summaries: Vec<TransferSummary>,
}

fn info_for(world: &SimWorld, i: usize) -> TransferInfo {
    let t = &world.transfers()[i];
    TransferInfo {
        id: t.id.clone(),
        src: format!("src-{}", t.id),
        dst: "dst".to_string(),
        total_bytes: t.total_bytes,
        file_count: t.file_count(),
        mean_file_bytes: t.total_bytes / t.file_count() as f64,
    }
}

/// Runs `world` for `options.duration` seconds, calling the controller after
/// every tick. Pending transfers are offered to the controller, oldest first,
/// at every tick boundary at or after their start time until accepted.
pub fn run(
    world: &mut SimWorld,
    controller: &mut dyn Controller,
    groups: &[ResourceGroup],
    options: &RunOptions,
) -> RunOutput {
    let ticks = (options.duration / world.tick - 1e-9).ceil().max(0.0) as usize;
    let mut trace = Vec::with_capacity(ticks);
    let mut records: Vec<TransferLogRecord> = Vec::new();
    let mut actions = Vec::new();
    for _ in 0..ticks {
        let now = world.clock;
        let mut pending: Vec<usize> = (0..world.transfers().len())
            .filter(|&i| {
                let t = &world.transfers()[i];
                t.status == TransferStatus::Pending && t.start <= now + 1e-9
            })
            .collect();
        pending.sort_by(|&a, &b| world.transfers()[a].start.total_cmp(&world.transfers()[b].start).then(a.cmp(&b)));
        for i in pending {
            let info = info_for(world, i);
            if let Decision::Start { params, group, reason } = controller.on_arrival(now, &info) {
                let g = groups[group.min(groups.len() - 1)];
                world.start_transfer(&info.id, params, g).expect("pending transfer can start");
                actions.push(Action::new(now, &info.id, ActionKind::SetParams, params, group, reason));
            }
        }

        let obs = world.step();
        for t in &obs.transfers {
            if let Some(r) = world.log_record(&obs, t, options.epoch) {
                records.push(r);
            }
        }
        let decided = controller.on_tick(&obs);
        for a in decided {
            let applied = match a.kind {
                ActionKind::SetParams => {
                    world.apply_params_with_pipelining(&a.id, a.params, a.pipelining.clone()).is_ok()
                }
                ActionKind::SetGroup => world.apply_group(&a.id, groups[a.group.min(groups.len() - 1)]).is_ok(),
                ActionKind::NoOp | ActionKind::Backoff => true,
            };
            if applied {
                actions.push(a);
            }
        }
        for t in obs.transfers.iter().filter(|t| t.finished) {
            controller.on_finish(obs.t1, &t.id);
        }
        trace.push(obs);
        if options.stop_when_idle && world.transfers().iter().all(|t| t.status == TransferStatus::Finished) {
            break;
        }
    }

    let mut energy = Vec::new();
    let mut summaries = Vec::new();
    for t in world.transfers() {
        energy.push((t.id.clone(), t.energy.clone()));
        let seconds = match (t.started_at, t.finished_at) {
            (Some(s), Some(f)) => f - s,
            (Some(s), None) => world.clock - s,
            _ => 0.0,
        };
        summaries.push(TransferSummary {
            id: t.id.clone(),
            bytes: t.bytes_done,
            total_bytes: t.total_bytes,
            seconds,
            joules: t.energy.joules_total,
            mean_throughput: if seconds > 0.0 { t.bytes_done * 8.0 / seconds } else { 0.0 },
            finished: t.status == TransferStatus::Finished,
        });
    }
    records.sort_by(|a, b| a.transfer_id.cmp(&b.transfer_id).then(a.timestamp.total_cmp(&b.timestamp)));
    RunOutput {
        trace,
        logs: LogBatch { records, provenance: "simulator".to_string() },
        energy,
        actions,
        summaries,
    }
}
