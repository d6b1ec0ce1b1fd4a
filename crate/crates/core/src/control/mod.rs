//! Online controllers driven by the simulator each tick.

pub mod baselines;
pub mod centralized;
pub mod distributed;

use std::fmt;

use crate::domain::{ParamSet, SlaKind, SlaSpec};
use crate::offline::SlaPartition;
use crate::simnet::{HostModel, LinkSpec, ResourceGroup, TickObservation, TransferObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    SetParams,
    SetGroup,
    NoOp,
    Backoff,
}

impl ActionKind {
    pub fn token(&self) -> &'static str {
        match self {
            ActionKind::SetParams => "setparams",
            ActionKind::SetGroup => "setgroup",
            ActionKind::NoOp => "noop",
            ActionKind::Backoff => "backoff",
        }
    }
}

/// One controller decision. `params` and `group` describe the state after
/// the action; for back-off they carry the new limits in `cc` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub t: f64,
    pub id: String,
    pub kind: ActionKind,
    pub params: ParamSet,
    pub group: usize,
    /// Optional per-process pipelining depths accompanying `SetParams`.
    pub pipelining: Option<Vec<u32>>,
    pub reason: &'static str,
}

impl Action {
    pub fn new(t: f64, id: &str, kind: ActionKind, params: ParamSet, group: usize, reason: &'static str) -> Self {
        Self { t, id: id.to_string(), kind, params, group, pipelining: None, reason }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} id={} act={} cc={} p={} pp={} grp={} reason={}",
            self.t,
            self.id,
            self.kind.token(),
            self.params.cc,
            self.params.p,
            self.params.pp,
            self.group,
            self.reason
        )
    }
}

/// Reply to a transfer arrival.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Start { params: ParamSet, group: usize, reason: &'static str },
    /// Keep the transfer queued; it is offered again next tick.
    Defer,
}

/// What a controller learns about an arriving transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferInfo {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub total_bytes: f64,
    pub file_count: u32,
    pub mean_file_bytes: f64,
}

/// Environment facts shared with controllers at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlContext {
    pub link: LinkSpec,
    pub host: HostModel,
    pub mss_bytes: f64,
    /// Resource groups, loosest last.
    pub groups: Vec<ResourceGroup>,
    pub tick: f64,
}

impl ControlContext {
    pub fn loosest_group(&self) -> usize {
        self.groups.len() - 1
    }
}

/// Hooks invoked by the simulation loop.
pub trait Controller {
    fn name(&self) -> &str;
    fn on_arrival(&mut self, t: f64, info: &TransferInfo) -> Decision;
    /// Called once per tick after the world advanced.
    fn on_tick(&mut self, obs: &TickObservation) -> Vec<Action>;
    fn on_finish(&mut self, _t: f64, _id: &str) {}
}

/// Loosest group whose worst-case watts stay within `cap` for any parameters
/// allowed by `limits`.
pub fn power_group(ctx: &ControlContext, limits: &crate::domain::ParamLimits, buffer: u64, cap: f64) -> Option<usize> {
    let streams = limits.cc_limit * limits.p_limit;
    (0..ctx.groups.len()).rev().find(|&g| {
        ctx.host.peak_watts(&ctx.groups[g], limits.cc_limit, streams, buffer, ctx.link.bandwidth, ctx.mss_bytes) <= cap
    })
}

/// Converts a whole-transfer SLA value into the units of the cache's
/// partitions. Energy levels refer to `reference_bytes`.
pub fn partition_value(sla: &SlaSpec, reference_bytes: f64, total_bytes: f64) -> f64 {
    match sla.kind {
        SlaKind::TotalEnergyCap => sla.value * reference_bytes / total_bytes,
        _ => sla.value,
    }
}

/// Level for an internal goal, which unlike a request may fall outside the
/// feasible range and is then clamped to it.
pub fn clamped_level(part: &SlaPartition, value: f64) -> usize {
    part.level_for(value.clamp(part.feasible_min, part.feasible_max)).unwrap_or(0)
}

/// Counts control intervals in which an SLA was not met.
///
/// Throughput is judged on the mean since the transfer started, energy on
/// joules spent against the pro-rata share of the cap, power per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaTracker {
    pub sla: SlaSpec,
    pub total_bytes: f64,
    pub seconds: f64,
    pub joules: f64,
    pub bytes: f64,
    pub ticks: u64,
    pub violations: u64,
}

impl SlaTracker {
    pub fn new(sla: SlaSpec, total_bytes: f64) -> Self {
        Self { sla, total_bytes, seconds: 0.0, joules: 0.0, bytes: 0.0, ticks: 0, violations: 0 }
    }

    /// Records one tick and returns whether it violated the SLA.
    pub fn observe(&mut self, t: &TransferObservation) -> bool {
        self.seconds += t.active_seconds;
        self.joules += t.watts * t.active_seconds;
        self.bytes = t.bytes_done;
        self.ticks += 1;
        let eps = self.sla.epsilon;
        let bad = match self.sla.kind {
            SlaKind::ThroughputGuarantee => self.bytes * 8.0 / self.seconds < self.sla.value - eps,
            SlaKind::TotalEnergyCap => self.joules > self.sla.value * self.bytes / self.total_bytes + eps,
            SlaKind::InstantPowerCap => t.watts > self.sla.value + eps,
        };
        if bad {
            self.violations += 1;
        }
        bad
    }

    pub fn fraction(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.violations as f64 / self.ticks as f64
        }
    }

    /// Tracks transfer `id` through a whole trace.
    pub fn over_trace(sla: SlaSpec, total_bytes: f64, trace: &[TickObservation], id: &str) -> Self {
        let mut s = Self::new(sla, total_bytes);
        for t in trace.iter().filter_map(|o| o.transfer(id)) {
            s.observe(t);
        }
        s
    }
}

impl ControlContext {
    /// Context for a simulated environment with the standard group ladder.
    pub fn for_config(config: &crate::simnet::SimConfig) -> Self {
        Self {
            link: config.link,
            host: config.host.clone(),
            mss_bytes: config.net.mss_bytes,
            groups: ResourceGroup::ladder(config.link.bandwidth),
            tick: config.tick,
        }
    }
}
