//! A single scheduler that admits transfers, accounts for their mutual load
//! and retunes them as the set of transfers or the capacity changes.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::domain::{ParamSet, SlaKind, SlaSpec};
use crate::offline::{CacheKey, OfflineError, Solution, SolutionCache};
use crate::simnet::{TickObservation, TransferObservation};

use super::{
    clamped_level, partition_value, power_group, Action, ActionKind, ControlContext, Controller, Decision,
    TransferInfo,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerStatus {
    Running,
    Finished,
    Aborted,
    SlaViolation,
}

impl LedgerStatus {
    pub fn token(&self) -> &'static str {
        match self {
            LedgerStatus::Running => "RUNNING",
            LedgerStatus::Finished => "FINISHED",
            LedgerStatus::Aborted => "ABORTED",
            LedgerStatus::SlaViolation => "SLA_VIOLATION",
        }
    }

    pub fn can_become(&self, next: LedgerStatus) -> bool {
        use LedgerStatus::*;
        matches!((self, next), (Running, Finished) | (Running, Aborted) | (Running, SlaViolation) | (SlaViolation, Running))
    }

    pub fn is_active(&self) -> bool {
        matches!(self, LedgerStatus::Running | LedgerStatus::SlaViolation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub sla: SlaSpec,
    pub cluster: Option<u32>,
    pub params: ParamSet,
    pub group: usize,
    pub total_bytes: f64,
    /// Throughput this transfer is being steered to.
    pub target_t: f64,
    pub predicted_t: f64,
    pub last: Option<TransferObservation>,
    pub status: LedgerStatus,
    /// Marked by a capacity drop that leaves the guarantee unattainable.
    pub capacity_violation: bool,
    recent: VecDeque<f64>,
    joules: f64,
    ticks: u64,
    last_tune: u64,
}

impl LedgerEntry {
    fn measured(&self) -> f64 {
        self.last.as_ref().map_or(self.predicted_t, |o| o.throughput)
    }
}

/// Status of every admitted transfer and the registered link capacity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    /// In admission order.
    pub entries: Vec<LedgerEntry>,
    pub capacity: f64,
    /// Every status change as `(id, from, to)`.
    pub transitions: Vec<(String, LedgerStatus, LedgerStatus)>,
}

impl Ledger {
    pub fn new(capacity: f64) -> Self {
        Self { entries: Vec::new(), capacity, transitions: Vec::new() }
    }

    pub fn get(&self, id: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn index(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn active(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| e.status.is_active())
    }

    /// Sum of throughput guarantees held by active transfers.
    pub fn guaranteed(&self) -> f64 {
        self.active().filter(|e| e.sla.kind == SlaKind::ThroughputGuarantee).map(|e| e.sla.value).sum()
    }

    pub fn transition(&mut self, id: &str, to: LedgerStatus) -> Result<(), String> {
        let i = self.index(id).ok_or_else(|| format!("unknown transfer {id}"))?;
        let from = self.entries[i].status;
        if from == to {
            return Ok(());
        }
        if !from.can_become(to) {
            return Err(format!("{id}: {} -> {} not allowed", from.token(), to.token()));
        }
        self.entries[i].status = to;
        self.transitions.push((id.to_string(), from, to));
        Ok(())
    }

    /// Load on the link from everything except transfer `i`.
    pub fn external_for(&self, i: usize) -> f64 {
        self.entries
            .iter()
            .enumerate()
            .filter(|(j, e)| *j != i && e.status.is_active())
            .map(|(_, e)| if e.sla.kind == SlaKind::ThroughputGuarantee { e.target_t } else { e.measured() })
            .sum()
    }
}

impl fmt::Display for LedgerEntry {
    /// `id src dst kind sla_val status cc p pp grp thr watts`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (thr, watts) = self.last.as_ref().map_or((0.0, 0.0), |o| (o.throughput, o.watts));
        write!(
            f,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            self.id,
            self.src,
            self.dst,
            self.sla.kind,
            self.sla.value,
            self.status.token(),
            self.params.cc,
            self.params.p,
            self.params.pp,
            self.group,
            thr,
            watts
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralConfig {
    /// Share of capacity handed out as throughput targets.
    pub headroom: f64,
    /// Ticks averaged when judging a throughput shortfall.
    pub window: usize,
    /// Minimum ticks between micro-tuning steps of one transfer.
    pub tune_interval: u64,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self { headroom: 0.95, window: 3, tune_interval: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedController {
    pub ctx: ControlContext,
    pub cache: Arc<SolutionCache>,
    pub config: CentralConfig,
    pub default_sla: SlaSpec,
    pub slas: BTreeMap<String, SlaSpec>,
    pub ledger: Ledger,
    /// Ledger snapshot lines, one block per control period.
    pub snapshots: Vec<String>,
    pub failed: BTreeMap<String, String>,
    deferred_at: Option<f64>,
    dirty: bool,
}

impl CentralizedController {
    pub fn new(ctx: ControlContext, cache: Arc<SolutionCache>, config: CentralConfig, default_sla: SlaSpec) -> Self {
        let capacity = ctx.link.bandwidth;
        Self {
            ctx,
            cache,
            config,
            default_sla,
            slas: BTreeMap::new(),
            ledger: Ledger::new(capacity),
            snapshots: Vec::new(),
            failed: BTreeMap::new(),
            deferred_at: None,
            dirty: false,
        }
    }

    pub fn sla_for(&self, id: &str) -> SlaSpec {
        self.slas.get(id).copied().unwrap_or(self.default_sla)
    }

    /// Spreads capacity left over by the guarantees evenly across the
    /// throughput transfers.
    fn assign_targets(&mut self) {
        let n = self.ledger.active().filter(|e| e.sla.kind == SlaKind::ThroughputGuarantee).count();
        if n == 0 {
            return;
        }
        let spare = (self.ledger.capacity * self.config.headroom - self.ledger.guaranteed()).max(0.0) / n as f64;
        for e in self.ledger.entries.iter_mut().filter(|e| e.status.is_active()) {
            if e.sla.kind == SlaKind::ThroughputGuarantee {
                e.target_t = e.sla.value + spare;
            }
        }
    }

    /// Cache solution for entry `i` at the load the ledger implies.
    pub fn solution_for(&self, i: usize) -> Result<(Solution, usize), OfflineError> {
        let e = &self.ledger.entries[i];
        let cluster = e.cluster.ok_or_else(|| OfflineError::UnknownKey("no cluster".into()))?;
        let info = self.cache.cluster(cluster).ok_or_else(|| OfflineError::UnknownKey(format!("cluster {cluster}")))?;
        let bucket = info.bucket_for(self.ledger.external_for(i) / self.ledger.capacity);
        let part = info.partition(e.sla.kind);
        let (level, group) = match e.sla.kind {
            SlaKind::ThroughputGuarantee => (clamped_level(part, e.target_t), self.ctx.loosest_group()),
            SlaKind::TotalEnergyCap => {
                let left = e.sla.value - e.joules;
                let done = e.last.as_ref().map_or(0.0, |o| o.bytes_done);
                let remaining = (e.total_bytes - done).max(1.0);
                let value = left * info.reference_bytes / remaining;
                let level = part.level_for(value.min(part.feasible_max)).ok_or_else(|| {
                    OfflineError::Infeasible(format!("{}: energy budget exhausted", e.id))
                })?;
                (level, e.group)
            }
            SlaKind::InstantPowerCap => {
                let level = part
                    .level_for(e.sla.value)
                    .ok_or_else(|| OfflineError::Infeasible(format!("{}: power cap outside range", e.id)))?;
                (level, e.group)
            }
        };
        let sol = self.cache.get(&CacheKey { cluster, kind: e.sla.kind, level, bucket })?;
        Ok((Solution { params: sol.params.clamped(&self.cache.limits), ..sol }, group))
    }

    /// Re-looks up every active transfer; returns actions for changed ones.
    fn redistribute(&mut self, t: f64, reason: &'static str) -> Vec<Action> {
        self.assign_targets();
        let mut out = Vec::new();
        for i in 0..self.ledger.entries.len() {
            if !self.ledger.entries[i].status.is_active() {
                continue;
            }
            let Ok((sol, group)) = self.solution_for(i) else { continue };
            let e = &mut self.ledger.entries[i];
            e.predicted_t = sol.predicted_t;
            if group != e.group {
                e.group = group;
                out.push(Action::new(t, &e.id, ActionKind::SetGroup, e.params, group, reason));
            }
            if sol.params != e.params {
                e.params = sol.params;
                out.push(Action::new(t, &e.id, ActionKind::SetParams, sol.params, e.group, reason));
            }
        }
        out
    }

    /// Retunes everything for a new link capacity. Guarantees that no longer
    /// fit, in admission order, are marked as violations.
    pub fn on_capacity_change(&mut self, t: f64, new_bw: f64) -> Vec<Action> {
        self.ledger.capacity = new_bw;
        let mut available = new_bw;
        let mut marks = Vec::new();
        for e in self.ledger.entries.iter_mut().filter(|e| e.status.is_active()) {
            if e.sla.kind != SlaKind::ThroughputGuarantee {
                continue;
            }
            e.capacity_violation = e.sla.value > available;
            if e.capacity_violation {
                marks.push(e.id.clone());
            } else {
                available -= e.sla.value;
            }
        }
        for id in marks {
            let _ = self.ledger.transition(&id, LedgerStatus::SlaViolation);
        }
        self.redistribute(t, "capacity")
    }

    /// One-knob step for a transfer out of its SLA.
    fn micro_tune(&mut self, t: f64, i: usize) -> Action {
        let limits = self.cache.limits;
        let e = &mut self.ledger.entries[i];
        e.last_tune = e.ticks;
        match e.sla.kind {
            SlaKind::ThroughputGuarantee => {
                let mut p = e.params;
                if p.p < limits.p_limit {
                    p.p += 1;
                } else if p.cc < limits.cc_limit {
                    p.cc += 1;
                }
                if p == e.params {
                    return Action::new(t, &e.id, ActionKind::NoOp, p, e.group, "microtune");
                }
                e.params = p;
                Action::new(t, &e.id, ActionKind::SetParams, p, e.group, "microtune")
            }
            _ => {
                if e.group == 0 {
                    return Action::new(t, &e.id, ActionKind::NoOp, e.params, 0, "microtune");
                }
                e.group -= 1;
                Action::new(t, &e.id, ActionKind::SetGroup, e.params, e.group, "microtune")
            }
        }
    }

    fn violated(&self, e: &LedgerEntry, obs: &TransferObservation) -> bool {
        match e.sla.kind {
            SlaKind::ThroughputGuarantee => {
                let mean = e.recent.iter().sum::<f64>() / e.recent.len().max(1) as f64;
                mean < e.sla.value - e.sla.epsilon
            }
            SlaKind::TotalEnergyCap => e.joules > e.sla.value * obs.bytes_done / e.total_bytes + e.sla.epsilon,
            SlaKind::InstantPowerCap => obs.watts > e.sla.value + e.sla.epsilon,
        }
    }

    /// Processes one batch of updates.
    pub fn on_update(&mut self, obs: &TickObservation) -> Result<Vec<Action>, OfflineError> {
        let t = obs.t1;
        let mut out = Vec::new();
        let mut tune = Vec::new();
        for o in &obs.transfers {
            let i = self.ledger.index(&o.id).ok_or_else(|| OfflineError::UnknownKey(format!("transfer {}", o.id)))?;
            let window = self.config.window;
            let e = &mut self.ledger.entries[i];
            e.ticks += 1;
            e.joules += o.watts * o.active_seconds;
            e.recent.push_back(o.throughput);
            while e.recent.len() > window {
                e.recent.pop_front();
            }
            e.last = Some(o.clone());
            if o.finished {
                let _ = self.ledger.transition(&o.id, LedgerStatus::Running);
                let _ = self.ledger.transition(&o.id, LedgerStatus::Finished);
                self.dirty = true;
                continue;
            }
            let e = &self.ledger.entries[i];
            if e.ticks < 2 {
                continue;
            }
            let capacity_violation = e.capacity_violation;
            if self.violated(e, o) || capacity_violation {
                let due = e.ticks - e.last_tune >= self.config.tune_interval;
                let _ = self.ledger.transition(&o.id, LedgerStatus::SlaViolation);
                if !capacity_violation && due {
                    tune.push(i);
                }
            } else {
                let _ = self.ledger.transition(&o.id, LedgerStatus::Running);
            }
        }
        if self.dirty {
            self.dirty = false;
            out.extend(self.redistribute(t, "redistribute"));
        } else {
            for i in tune {
                out.push(self.micro_tune(t, i));
            }
        }
        Ok(out)
    }

    fn snapshot(&mut self) {
        let lines: Vec<String> = self.ledger.entries.iter().map(|e| e.to_string()).collect();
        self.snapshots.extend(lines);
    }
}

impl Controller for CentralizedController {
    fn name(&self) -> &str {
        "centralized"
    }

    fn on_arrival(&mut self, t: f64, info: &TransferInfo) -> Decision {
        if self.deferred_at == Some(t) {
            return Decision::Defer;
        }
        let sla = self.sla_for(&info.id);
        if sla.kind == SlaKind::ThroughputGuarantee && self.ledger.guaranteed() + sla.value > self.ledger.capacity {
            self.deferred_at = Some(t);
            return Decision::Defer;
        }
        let link = &self.ctx.link;
        let cluster = self.cache.match_cluster(info.mean_file_bytes, link.rtt, link.bandwidth, link.buffer);
        let group = match sla.kind {
            SlaKind::ThroughputGuarantee => self.ctx.loosest_group(),
            SlaKind::TotalEnergyCap => self.ctx.groups.len() / 2,
            SlaKind::InstantPowerCap => power_group(&self.ctx, &self.cache.limits, link.buffer, sla.value).unwrap_or(0),
        };
        let fallback = ParamSet { cc: 1, p: 1, pp: 1, bs: link.buffer };
        self.ledger.entries.push(LedgerEntry {
            id: info.id.clone(),
            src: info.src.clone(),
            dst: info.dst.clone(),
            sla,
            cluster,
            params: fallback,
            group,
            total_bytes: info.total_bytes,
            target_t: sla.value,
            predicted_t: 0.0,
            last: None,
            status: LedgerStatus::Running,
            capacity_violation: false,
            recent: VecDeque::new(),
            joules: 0.0,
            ticks: 0,
            last_tune: 0,
        });
        let i = self.ledger.entries.len() - 1;
        let feasible = cluster
            .and_then(|c| self.cache.cluster(c))
            .map(|c| c.partition(sla.kind).level_for(partition_value(&sla, c.reference_bytes, info.total_bytes)));
        if feasible.flatten().is_none() {
            self.failed.insert(info.id.clone(), format!("{} {} has no feasible level", sla.kind, sla.value));
            return Decision::Start { params: fallback, group, reason: "infeasible" };
        }
        self.assign_targets();
        match self.solution_for(i) {
            Ok((sol, group)) => {
                let e = &mut self.ledger.entries[i];
                e.params = sol.params;
                e.group = group;
                e.predicted_t = sol.predicted_t;
                self.dirty = true;
                Decision::Start { params: sol.params, group, reason: "admit" }
            }
            Err(err) => {
                self.failed.insert(info.id.clone(), err.to_string());
                Decision::Start { params: fallback, group, reason: "infeasible" }
            }
        }
    }

    fn on_tick(&mut self, obs: &TickObservation) -> Vec<Action> {
        let mut out = Vec::new();
        if (obs.link_bandwidth - self.ledger.capacity).abs() > 1e-6 * self.ledger.capacity {
            out.extend(self.on_capacity_change(obs.t1, obs.link_bandwidth));
        }
        // Dispatches from this tick's admissions are already in flight.
        let admitted = std::mem::take(&mut self.dirty);
        match self.on_update(obs) {
            Ok(a) => out.extend(a),
            Err(e) => {
                self.failed.insert("update".into(), e.to_string());
            }
        }
        if admitted {
            out.extend(self.redistribute(obs.t1, "redistribute"));
        }
        self.snapshot();
        out
    }
}
