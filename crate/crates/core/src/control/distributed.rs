//! Per-transfer tuning without coordination between transfers.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::domain::{ParamLimits, ParamSet, SlaKind, SlaSpec};
use crate::offline::{CacheKey, LoadBucket, OfflineError, SolutionCache};
use crate::simnet::{TickObservation, TransferObservation};

use super::{
    clamped_level, partition_value, power_group, Action, ActionKind, ControlContext, Controller, Decision,
    TransferInfo,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunerConfig {
    /// Consecutive ticks a congestion signal must persist before back-off.
    pub dwell: u32,
    /// Packet loss rate that counts as congestion.
    pub loss_threshold: f64,
    /// Relative departure of queuing delay from its recent mean that counts.
    pub delay_departure: f64,
    /// Trigger on delay rising above the recent mean instead of falling below.
    pub invert_delay_trigger: bool,
    /// Ticks in the queuing-delay reference window.
    pub delay_window: usize,
    /// Throughput credit capacity, in seconds of `epsilon`.
    pub buffer_seconds: f64,
    /// Seconds over which an empty credit buffer is meant to fill.
    pub fill_horizon: f64,
    pub opportunistic: bool,
    /// Efficient ticks in a row before an energy transfer tightens its group.
    pub efficient_dwell: u32,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            dwell: 3,
            loss_threshold: 0.01,
            delay_departure: 0.25,
            invert_delay_trigger: false,
            delay_window: 10,
            buffer_seconds: 60.0,
            fill_horizon: 30.0,
            opportunistic: true,
            efficient_dwell: 5,
        }
    }
}

/// Online state of one tuned transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub id: String,
    pub sla: SlaSpec,
    pub cluster: u32,
    /// Current additive-increase / multiplicative-decrease limits.
    pub limits: ParamLimits,
    /// Hard caps the limits recover towards.
    pub caps: ParamLimits,
    /// Parameters from the last lookup, before clamping to `limits`.
    pub target: ParamSet,
    pub current: ParamSet,
    pub group: usize,
    /// Group assigned at start.
    pub home_group: usize,
    /// Loosest group this transfer may use.
    pub max_group: usize,
    pub energy_spent: f64,
    pub data_done: f64,
    pub data_total: f64,
    /// Bit-seconds of throughput delivered above the guarantee.
    pub throughput_buffer: f64,
    pub t_goal: f64,
    pub t_pred: f64,
    pub recent: VecDeque<TransferObservation>,
    pub pipelining: Option<Vec<u32>>,
    /// Set when a lookup failed and the transfer runs on its last parameters.
    pub degraded: bool,
    loss_run: u32,
    delay_run: u32,
    efficient_run: u32,
    ticks: u64,
}

/// Limit changes made by one back-off evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackoffOutcome {
    pub parallelism: bool,
    pub concurrency: bool,
}

impl BackoffOutcome {
    pub fn any(&self) -> bool {
        self.parallelism || self.concurrency
    }
}

/// Largest-remainder split of `budget` pipelining slots over processes in
/// proportion to their throughput, at least one each. Also returns the
/// processes below half the median throughput.
pub fn redistribute_pipelining(throughputs: &[f64], budget: u32) -> (Vec<u32>, Vec<usize>) {
    let n = throughputs.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let budget = budget.max(n as u32);
    let rates: Vec<f64> = throughputs.iter().map(|t| if t.is_finite() { t.max(0.0) } else { 0.0 }).collect();
    let total: f64 = rates.iter().sum();
    let weights: Vec<f64> = if total > 0.0 { rates.clone() } else { vec![1.0; n] };
    let wsum: f64 = weights.iter().sum();
    let rest = (budget - n as u32) as f64;
    let shares: Vec<f64> = weights.iter().map(|w| rest * w / wsum).collect();
    let mut out: Vec<u32> = shares.iter().map(|s| 1 + s.floor() as u32).collect();
    let mut left = budget - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    let median = crate::num::median(&rates).unwrap_or(0.0);
    let low = (0..n).filter(|&i| rates[i] < 0.5 * median).collect();
    (out, low)
}

impl TunerState {
    /// Starting parameters for a transfer: the median-load solution for its
    /// SLA level.
    pub fn init(
        id: &str,
        sla: SlaSpec,
        cache: &SolutionCache,
        cluster: u32,
        ctx: &ControlContext,
        config: &TunerConfig,
        data_total: f64,
    ) -> Result<Self, OfflineError> {
        let info = cache.cluster(cluster).ok_or_else(|| OfflineError::UnknownKey(format!("cluster {cluster}")))?;
        let part = info.partition(sla.kind);
        let requested = partition_value(&sla, info.reference_bytes, data_total);
        let mut level = part
            .level_for(requested)
            .ok_or_else(|| OfflineError::Infeasible(format!("{} {} outside historical range", sla.kind, sla.value)))?;
        let caps = cache.limits;
        let (group, max_group) = match sla.kind {
            SlaKind::ThroughputGuarantee => (ctx.loosest_group(), ctx.loosest_group()),
            SlaKind::TotalEnergyCap => (ctx.groups.len() / 2, ctx.loosest_group()),
            SlaKind::InstantPowerCap => {
                let g = power_group(ctx, &caps, ctx.link.buffer, sla.value).ok_or_else(|| {
                    OfflineError::Infeasible(format!("no resource group keeps power under {}", sla.value))
                })?;
                (g, g)
            }
        };
        let mut t_goal = sla.value;
        let base = CacheKey { cluster, kind: sla.kind, level, bucket: LoadBucket::Median };
        let mut sol = None;
        if sla.kind == SlaKind::ThroughputGuarantee && config.opportunistic {
            t_goal = sla.value + sla.epsilon * config.buffer_seconds / config.fill_horizon;
            level = clamped_level(part, t_goal).max(level);
            // Banking headroom is optional: fall back to the plain level.
            sol = cache.get(&CacheKey { level, ..base }).ok();
        }
        let sol = match sol {
            Some(s) => s,
            None => cache.get(&base)?,
        };
        let current = sol.params.clamped(&caps);
        Ok(Self {
            id: id.to_string(),
            sla,
            cluster,
            limits: caps,
            caps,
            target: sol.params,
            current,
            group,
            home_group: group,
            max_group,
            energy_spent: 0.0,
            data_done: 0.0,
            data_total,
            throughput_buffer: 0.0,
            t_goal,
            t_pred: sol.predicted_t,
            recent: VecDeque::new(),
            pipelining: None,
            degraded: false,
            loss_run: 0,
            delay_run: 0,
            efficient_run: 0,
            ticks: 0,
        })
    }

    fn buffer_capacity(&self, config: &TunerConfig) -> f64 {
        self.sla.epsilon * config.buffer_seconds
    }

    /// Multiplicative decrease of parallelism on a queuing-delay anomaly and
    /// of concurrency on sustained loss.
    pub fn back_off(&mut self, obs: &TransferObservation, config: &TunerConfig) -> BackoffOutcome {
        let mut out = BackoffOutcome::default();
        let window: Vec<f64> = self.recent.iter().rev().take(config.delay_window).map(|o| o.queuing_delay).collect();
        let delay_hit = if window.is_empty() {
            false
        } else {
            let expected = window.iter().sum::<f64>() / window.len() as f64;
            if config.invert_delay_trigger {
                obs.queuing_delay > expected * (1.0 + config.delay_departure)
            } else {
                obs.queuing_delay < expected * (1.0 - config.delay_departure)
            }
        };
        self.delay_run = if delay_hit { self.delay_run + 1 } else { 0 };
        self.loss_run = if obs.packet_loss_rate > config.loss_threshold { self.loss_run + 1 } else { 0 };
        if self.delay_run >= config.dwell {
            let next = ((self.limits.p_limit as f64 * self.limits.beta1).floor() as u32).max(1);
            out.parallelism = next < self.limits.p_limit;
            self.limits.p_limit = next;
            self.delay_run = 0;
        }
        if self.loss_run >= config.dwell {
            let next = ((self.limits.cc_limit as f64 * self.limits.beta2).floor() as u32).max(1);
            out.concurrency = next < self.limits.cc_limit;
            self.limits.cc_limit = next;
            self.loss_run = 0;
        }
        out
    }

    /// Additive increase of both limits towards the caps.
    pub fn raise_limits(&mut self) -> bool {
        let before = (self.limits.cc_limit, self.limits.p_limit);
        self.limits.cc_limit = (self.limits.cc_limit + self.limits.alpha_cc).min(self.caps.cc_limit);
        self.limits.p_limit = (self.limits.p_limit + self.limits.alpha_p).min(self.caps.p_limit);
        before != (self.limits.cc_limit, self.limits.p_limit)
    }

    fn relookup(&mut self, cache: &SolutionCache, kind: SlaKind, value: f64) -> bool {
        let Some(info) = cache.cluster(self.cluster) else {
            self.degraded = true;
            return false;
        };
        let level = clamped_level(info.partition(kind), value);
        let key = |level| CacheKey { cluster: self.cluster, kind, level, bucket: LoadBucket::Median };
        if let Ok(sol) = cache.get(&key(level)) {
            self.target = sol.params;
            self.t_pred = sol.predicted_t;
            self.degraded = false;
            return true;
        }
        self.degraded = true;
        // A throughput goal above what history supports: take the highest
        // level that has a solution.
        if kind == SlaKind::ThroughputGuarantee {
            if let Some(sol) = (0..level).rev().find_map(|l| cache.get(&key(l)).ok()) {
                self.target = sol.params;
                self.t_pred = sol.predicted_t;
            }
        }
        false
    }

    /// One periodic check. Returns the actions for this transfer.
    pub fn on_tick(
        &mut self,
        t: f64,
        obs: &TransferObservation,
        cache: &SolutionCache,
        config: &TunerConfig,
    ) -> Vec<Action> {
        self.ticks += 1;
        self.energy_spent += obs.watts * obs.active_seconds;
        self.data_done = obs.bytes_done;
        let mut actions = Vec::new();
        let mut reason = "inband";

        let backed = self.back_off(obs, config);
        if backed.any() {
            let mut a = Action::new(t, &self.id, ActionKind::Backoff, self.current, self.group, "backoff");
            a.params.cc = self.limits.cc_limit;
            a.params.p = self.limits.p_limit;
            actions.push(a);
        } else if obs.packet_loss_rate <= config.loss_threshold && self.raise_limits() {
            reason = "recover";
        }
        self.recent.push_back(obs.clone());
        while self.recent.len() > config.delay_window + 1 {
            self.recent.pop_front();
        }

        let t_curr = obs.throughput;
        let mut group = self.group;
        // The first tick is dominated by slow start.
        if self.ticks > 1 {
            match self.sla.kind {
                SlaKind::ThroughputGuarantee => {
                    let sla = self.sla.value;
                    let eps = self.sla.epsilon;
                    let cap = self.buffer_capacity(config);
                    self.throughput_buffer = (self.throughput_buffer + (t_curr - sla) * obs.active_seconds).clamp(0.0, cap);
                    let fill =
                        if config.opportunistic { (cap - self.throughput_buffer) / config.fill_horizon } else { 0.0 };
                    if t_curr < sla - eps {
                        self.t_goal = sla + (sla - t_curr) + fill;
                        self.relookup(cache, SlaKind::ThroughputGuarantee, self.t_goal);
                        reason = "below";
                    } else if t_curr > sla + eps {
                        self.t_goal = sla + fill;
                        self.relookup(cache, SlaKind::ThroughputGuarantee, self.t_goal);
                        reason = "above";
                    }
                }
                SlaKind::TotalEnergyCap => {
                    let eta = self.data_total / self.sla.value;
                    let efficiency = if self.energy_spent > 0.0 { self.data_done / self.energy_spent } else { eta };
                    if efficiency <= eta {
                        self.efficient_run = 0;
                        let left = self.sla.value - self.energy_spent;
                        let remaining = (self.data_total - self.data_done).max(1.0);
                        if let Some(info) = cache.cluster(self.cluster) {
                            let part = info.partition(SlaKind::TotalEnergyCap);
                            let value = left * info.reference_bytes / remaining;
                            // Only issue parameters whose predicted energy fits what is left.
                            if value >= part.feasible_min {
                                self.relookup(cache, SlaKind::TotalEnergyCap, value);
                            } else {
                                self.degraded = true;
                            }
                        }
                        group = group.max(self.home_group);
                        reason = "budget";
                    } else {
                        self.efficient_run += 1;
                        if config.opportunistic && self.efficient_run >= config.efficient_dwell && group > 0 {
                            group -= 1;
                            self.efficient_run = 0;
                            reason = "efficient";
                        }
                    }
                }
                SlaKind::InstantPowerCap => {
                    reason = if t_curr <= self.t_pred * 0.95 { "below" } else { "power" };
                    self.relookup(cache, SlaKind::InstantPowerCap, self.sla.value);
                }
            }
        }

        let group = group.min(self.max_group);
        if group != self.group {
            self.group = group;
            actions.push(Action::new(t, &self.id, ActionKind::SetGroup, self.current, group, reason));
        }
        let next = self.target.clamped(&self.limits);
        let mut pipelining = None;
        if next.cc > 1 && next.pp > 1 && next.cc == self.current.cc && obs.process_throughput.len() == next.cc as usize {
            let (pp, low) = redistribute_pipelining(&obs.process_throughput, next.cc * next.pp);
            if !low.is_empty() {
                pipelining = Some(pp);
            }
        }
        if next != self.current || (pipelining.is_some() && pipelining != self.pipelining) {
            self.current = next;
            if pipelining.is_some() {
                self.pipelining = pipelining.clone();
            } else if next.cc as usize != self.pipelining.as_ref().map_or(0, Vec::len) {
                self.pipelining = None;
            }
            let mut a = Action::new(t, &self.id, ActionKind::SetParams, next, self.group, reason);
            a.pipelining = pipelining;
            actions.push(a);
        }
        if actions.is_empty() {
            actions.push(Action::new(t, &self.id, ActionKind::NoOp, self.current, self.group, reason));
        }
        actions
    }
}

/// Independent tuners, one per transfer.
#[derive(Debug, Clone)]
pub struct DistributedController {
    pub ctx: ControlContext,
    pub cache: Arc<SolutionCache>,
    pub config: TunerConfig,
    pub default_sla: SlaSpec,
    /// Per-transfer SLA overrides.
    pub slas: BTreeMap<String, SlaSpec>,
    pub states: BTreeMap<String, TunerState>,
    /// Transfers whose initial lookup failed, with the reason.
    pub failed: BTreeMap<String, String>,
}

impl DistributedController {
    pub fn new(ctx: ControlContext, cache: Arc<SolutionCache>, config: TunerConfig, default_sla: SlaSpec) -> Self {
        Self { ctx, cache, config, default_sla, slas: BTreeMap::new(), states: BTreeMap::new(), failed: BTreeMap::new() }
    }

    pub fn sla_for(&self, id: &str) -> SlaSpec {
        self.slas.get(id).copied().unwrap_or(self.default_sla)
    }
}

impl Controller for DistributedController {
    fn name(&self) -> &str {
        "distributed"
    }

    fn on_arrival(&mut self, _t: f64, info: &TransferInfo) -> Decision {
        let sla = self.sla_for(&info.id);
        let link = &self.ctx.link;
        let state = self
            .cache
            .match_cluster(info.mean_file_bytes, link.rtt, link.bandwidth, link.buffer)
            .ok_or_else(|| OfflineError::UnknownKey("no clusters".into()))
            .and_then(|c| TunerState::init(&info.id, sla, &self.cache, c, &self.ctx, &self.config, info.total_bytes));
        match state {
            Ok(s) => {
                let d = Decision::Start { params: s.current, group: s.group, reason: "start" };
                self.states.insert(info.id.clone(), s);
                d
            }
            Err(e) => {
                self.failed.insert(info.id.clone(), e.to_string());
                let params = ParamSet { cc: 1, p: 1, pp: 1, bs: link.buffer };
                Decision::Start { params, group: self.ctx.loosest_group(), reason: "infeasible" }
            }
        }
    }

    fn on_tick(&mut self, obs: &TickObservation) -> Vec<Action> {
        let mut out = Vec::new();
        for t in obs.transfers.iter().filter(|t| !t.finished) {
            if let Some(s) = self.states.get_mut(&t.id) {
                out.extend(s.on_tick(obs.t1, t, &self.cache, &self.config));
            }
        }
        out
    }

    fn on_finish(&mut self, _t: f64, id: &str) {
        self.states.remove(id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipelining_split_examples() {
        assert_eq!(redistribute_pipelining(&[5.0, 5.0, 5.0], 12), (vec![4, 4, 4], vec![]));
        assert_eq!(redistribute_pipelining(&[3.0, 1.0], 8).0, vec![6, 2]);
        let (pp, low) = redistribute_pipelining(&[4.0, 0.0, 4.0], 9);
        assert_eq!(pp[1], 1);
        assert_eq!(low, vec![1]);
        assert_eq!(pp.iter().sum::<u32>(), 9);
    }
}
