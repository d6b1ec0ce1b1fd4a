//! Reference controllers: additive concurrency search, fixed parameters and
//! a single stream.

use std::collections::BTreeMap;

use crate::domain::ParamSet;
use crate::simnet::TickObservation;

use super::{Action, ActionKind, Controller, Decision, TransferInfo};

/// Fixed parameters for the whole transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticController {
    pub params: ParamSet,
    pub group: usize,
    name: &'static str,
}

impl StaticController {
    pub fn new(params: ParamSet, group: usize) -> Self {
        Self { params, group, name: "static" }
    }

    /// One process, one stream, no pipelining.
    pub fn single_stream(buffer: u64, group: usize) -> Self {
        Self { params: ParamSet { cc: 1, p: 1, pp: 1, bs: buffer }, group, name: "single" }
    }
}

impl Controller for StaticController {
    fn name(&self) -> &str {
        self.name
    }

    fn on_arrival(&mut self, _t: f64, _info: &TransferInfo) -> Decision {
        Decision::Start { params: self.params, group: self.group, reason: "static" }
    }

    fn on_tick(&mut self, _obs: &TickObservation) -> Vec<Action> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HteePhase {
    Searching,
    Committed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HteeConfig {
    /// Largest concurrency tried.
    pub limit: u32,
    /// Ticks spent at each level.
    pub dwell: u32,
    pub pipelining: u32,
    pub buffer: u64,
    pub group: usize,
}

/// Search state of one transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct HteeState {
    pub current_cc: u32,
    pub limit: u32,
    /// `(cc, bits per joule)` for every finished level.
    pub ratio_table: Vec<(u32, f64)>,
    pub phase: HteePhase,
    ticks: u32,
    bits: f64,
    joules: f64,
}

impl HteeState {
    pub fn new(limit: u32) -> Self {
        Self {
            current_cc: 1,
            limit: limit.max(1),
            ratio_table: Vec::new(),
            phase: HteePhase::Searching,
            ticks: 0,
            bits: 0.0,
            joules: 0.0,
        }
    }

    /// Level with the best ratio, first on ties.
    pub fn best(&self) -> Option<u32> {
        let mut best: Option<(u32, f64)> = None;
        for &(cc, r) in &self.ratio_table {
            if best.is_none_or(|b| r > b.1) {
                best = Some((cc, r));
            }
        }
        best.map(|b| b.0)
    }

    /// Feeds one tick. Returns the concurrency to switch to, if any.
    pub fn observe(&mut self, bits: f64, joules: f64, dwell: u32) -> Option<u32> {
        if self.phase == HteePhase::Committed {
            return None;
        }
        self.ticks += 1;
        self.bits += bits;
        self.joules += joules;
        if self.ticks < dwell {
            return None;
        }
        let ratio = if self.joules > 0.0 { self.bits / self.joules } else { 0.0 };
        self.ratio_table.push((self.current_cc, ratio));
        self.ticks = 0;
        self.bits = 0.0;
        self.joules = 0.0;
        if self.current_cc + 2 <= self.limit {
            self.current_cc += 2;
        } else {
            self.phase = HteePhase::Committed;
            self.current_cc = self.best().expect("at least one level");
        }
        Some(self.current_cc)
    }
}

/// Tries concurrency 1, 3, 5, ... up to the limit, then keeps the level with
/// the best throughput-to-energy ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct HteeController {
    pub config: HteeConfig,
    pub states: BTreeMap<String, HteeState>,
}

impl HteeController {
    pub fn new(config: HteeConfig) -> Self {
        Self { config, states: BTreeMap::new() }
    }

    fn params(&self, cc: u32) -> ParamSet {
        ParamSet { cc, p: 1, pp: self.config.pipelining.max(1), bs: self.config.buffer }
    }
}

impl Controller for HteeController {
    fn name(&self) -> &str {
        "htee"
    }

    fn on_arrival(&mut self, _t: f64, info: &TransferInfo) -> Decision {
        self.states.insert(info.id.clone(), HteeState::new(self.config.limit));
        Decision::Start { params: self.params(1), group: self.config.group, reason: "search" }
    }

    fn on_tick(&mut self, obs: &TickObservation) -> Vec<Action> {
        let mut out = Vec::new();
        for t in obs.transfers.iter().filter(|t| !t.finished) {
            let dwell = self.config.dwell.max(1);
            let Some(state) = self.states.get_mut(&t.id) else { continue };
            let searching = state.phase == HteePhase::Searching;
            let next = state.observe(t.bytes_moved * 8.0, t.watts * t.active_seconds, dwell);
            let committed = state.phase == HteePhase::Committed;
            let (kind, cc, reason) = match next {
                Some(cc) if committed => (ActionKind::SetParams, cc, "commit"),
                Some(cc) => (ActionKind::SetParams, cc, "search"),
                None if searching => continue,
                None => (ActionKind::NoOp, state.current_cc, "committed"),
            };
            if kind == ActionKind::NoOp {
                continue;
            }
            out.push(Action::new(obs.t1, &t.id, kind, self.params(cc), self.config.group, reason));
        }
        out
    }

    fn on_finish(&mut self, _t: f64, id: &str) {
        self.states.remove(id);
    }
}
