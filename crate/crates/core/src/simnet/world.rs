use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{EnergyAccount, ParamSet, Utilization};
use crate::logstore::{Dataset, TransferLogRecord};

use super::model::{ExternalFlow, FileSizes, HostModel, LinkSpec, NetModel, ResourceGroup, Workload};
use super::SimError;

/// Static description of a simulated environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub link: LinkSpec,
    pub net: NetModel,
    pub host: HostModel,
    /// Control interval in seconds.
    pub tick: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferStatus {
    Pending,
    Active,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stream {
    rate: f64,
    ssthresh: f64,
    slow_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Process {
    streams: Vec<Stream>,
    pp: u32,
    current: Option<f64>,
    gap: f64,
}

/// A managed transfer inside the world.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferState {
    pub id: String,
    /// Requested start time.
    pub start: f64,
    pub workload: Workload,
    pub params: ParamSet,
    pub group: ResourceGroup,
    pub status: TransferStatus,
    pub started_at: Option<f64>,
    pub finished_at: Option<f64>,
    pub total_bytes: f64,
    pub bytes_done: f64,
    pub energy: EnergyAccount,
    /// Process-seconds spent waiting between files.
    pub idle_seconds: f64,
    processes: Vec<Process>,
    queue: VecDeque<f64>,
    pending_params: Option<(ParamSet, Option<Vec<u32>>)>,
    pending_group: Option<ResourceGroup>,
}

impl TransferState {
    pub fn file_count(&self) -> u32 {
        self.workload.file_count
    }

    pub fn remaining_bytes(&self) -> f64 {
        (self.total_bytes - self.bytes_done).max(0.0)
    }

    /// Pipelining depth of each process.
    pub fn pipelining(&self) -> Vec<u32> {
        self.processes.iter().map(|p| p.pp).collect()
    }
}

/// Per-transfer part of a tick observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferObservation {
    pub id: String,
    /// Bits/s over the part of the tick the transfer was running.
    pub throughput: f64,
    /// Bits/s averaged over the whole tick.
    pub goodput: f64,
    pub queuing_delay: f64,
    pub packet_loss_rate: f64,
    pub processes: Vec<Utilization>,
    pub process_throughput: Vec<f64>,
    pub watts: f64,
    /// Seconds of the tick the transfer was running.
    pub active_seconds: f64,
    pub bytes_moved: f64,
    pub bytes_done: f64,
    pub bytes_total: f64,
    pub params: ParamSet,
    pub group: ResourceGroup,
    pub finished: bool,
}

impl TransferObservation {
    pub fn utilization(&self) -> Utilization {
        self.processes.iter().fold(Utilization::default(), |a, u| a + *u)
    }
}

/// Everything observed during one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickObservation {
    /// Tick start and end times.
    pub t0: f64,
    pub t1: f64,
    pub transfers: Vec<TransferObservation>,
    /// Delivered traffic (managed plus external) over capacity.
    pub link_utilization: f64,
    pub link_bandwidth: f64,
    pub external_goodput: f64,
}

impl TickObservation {
    pub fn transfer(&self, id: &str) -> Option<&TransferObservation> {
        self.transfers.iter().find(|t| t.id == id)
    }
}

/// Deterministic fluid simulation of transfers sharing one bottleneck.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub clock: f64,
    pub link: LinkSpec,
    pub net: NetModel,
    pub host: HostModel,
    pub tick: f64,
    pub rng_seed: u64,
    pub external_flows: Vec<ExternalFlow>,
    /// Scheduled `(time, new bandwidth)` changes, sorted by time.
    capacity_changes: Vec<(f64, f64)>,
    transfers: Vec<TransferState>,
    rng: ChaCha8Rng,
}

fn file_sizes(workload: &Workload, seed: u64) -> VecDeque<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..workload.file_count)
        .map(|_| match workload.file_bytes {
            FileSizes::Fixed(b) => b as f64,
            FileSizes::Uniform { lo, hi } => rng.random_range(lo..=hi) as f64,
        })
        .collect()
}

/// Average and end rate of a stream over `dt` seconds of growth.
fn grow(s: &mut Stream, dt: f64, cap: f64, rtt: f64, ca_rate: f64) -> (f64, f64) {
    if s.rate >= cap {
        s.rate = cap;
        s.slow_start = false;
        return (cap, cap);
    }
    let r = s.rate;
    if s.slow_start {
        let target = s.ssthresh.min(cap).max(r);
        let t_star = rtt * (target / r).log2();
        let ln2 = std::f64::consts::LN_2;
        if t_star >= dt {
            let end = r * (dt / rtt).exp2();
            return ((r * rtt / ln2) * ((dt / rtt).exp2() - 1.0) / dt, end);
        }
        s.slow_start = false;
        let area = (r * rtt / ln2) * (target / r - 1.0) + target * (dt - t_star);
        return (area / dt, target);
    }
    let t_cap = (cap - r) / ca_rate;
    if t_cap >= dt {
        let end = r + ca_rate * dt;
        ((r + end) / 2.0, end)
    } else {
        let area = (r + cap) / 2.0 * t_cap + cap * (dt - t_cap);
        (area / dt, cap)
    }
}

impl SimWorld {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        if !config.link.valid() {
            return Err(SimError::Config("link values must be positive".into()));
        }
        if !(config.tick > 0.0) {
            return Err(SimError::Config("tick must be positive".into()));
        }
        Ok(Self {
            clock: 0.0,
            link: config.link,
            net: config.net,
            host: config.host,
            tick: config.tick,
            rng_seed: config.seed,
            external_flows: Vec::new(),
            capacity_changes: Vec::new(),
            transfers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    /// Schedules a bottleneck capacity change taking effect at the first tick
    /// starting at or after `at`.
    pub fn schedule_capacity(&mut self, at: f64, bandwidth: f64) {
        self.capacity_changes.push((at, bandwidth));
        self.capacity_changes.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    /// Registers a transfer; it stays pending until [`SimWorld::start_transfer`].
    pub fn add_transfer(&mut self, id: &str, start: f64, workload: Workload) -> Result<usize, SimError> {
        if !workload.valid() {
            return Err(SimError::Config(format!("transfer {id}: invalid workload")));
        }
        if self.transfers.iter().any(|t| t.id == id) {
            return Err(SimError::Config(format!("duplicate transfer id {id}")));
        }
        let index = self.transfers.len();
        let seed = self.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64 + 1);
        let queue = file_sizes(&workload, seed);
        let total_bytes = queue.iter().sum();
        let full = ResourceGroup { cpu_cap: 1.0, nic_cap: self.link.bandwidth };
        self.transfers.push(TransferState {
            id: id.to_string(),
            start,
            workload,
            params: ParamSet { cc: 1, p: 1, pp: 1, bs: self.link.buffer },
            group: full,
            status: TransferStatus::Pending,
            started_at: None,
            finished_at: None,
            total_bytes,
            bytes_done: 0.0,
            energy: EnergyAccount::default(),
            idle_seconds: 0.0,
            processes: Vec::new(),
            queue,
            pending_params: None,
            pending_group: None,
        });
        Ok(index)
    }

    pub fn transfers(&self) -> &[TransferState] {
        &self.transfers
    }

    pub fn transfer(&self, id: &str) -> Option<&TransferState> {
        self.transfers.iter().find(|t| t.id == id)
    }

    fn index_of(&self, id: &str) -> Result<usize, SimError> {
        self.transfers.iter().position(|t| t.id == id).ok_or_else(|| SimError::UnknownTransfer(id.to_string()))
    }

    /// Activates a pending transfer with its first parameters and group.
    pub fn start_transfer(&mut self, id: &str, params: ParamSet, group: ResourceGroup) -> Result<(), SimError> {
        let i = self.index_of(id)?;
        params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let t = &mut self.transfers[i];
        if t.status != TransferStatus::Pending {
            return Err(SimError::Config(format!("transfer {id} already started")));
        }
        t.status = TransferStatus::Active;
        t.started_at = Some(self.clock);
        t.group = group;
        t.pending_params = Some((params, None));
        Ok(())
    }

    /// Queues new parameters for the next tick.
    pub fn apply_params(&mut self, id: &str, params: ParamSet) -> Result<(), SimError> {
        self.apply_params_with_pipelining(id, params, None)
    }

    /// Like [`SimWorld::apply_params`] with an explicit per-process depth.
    pub fn apply_params_with_pipelining(
        &mut self,
        id: &str,
        params: ParamSet,
        per_process: Option<Vec<u32>>,
    ) -> Result<(), SimError> {
        let i = self.index_of(id)?;
        params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if let Some(v) = &per_process {
            if v.len() != params.cc as usize || v.contains(&0) {
                return Err(SimError::Config("per-process pipelining must have cc positive entries".into()));
            }
        }
        let t = &mut self.transfers[i];
        if t.status != TransferStatus::Active {
            return Err(SimError::UnknownTransfer(id.to_string()));
        }
        t.pending_params = Some((params, per_process));
        Ok(())
    }

    /// Queues a resource-group change for the next tick.
    pub fn apply_group(&mut self, id: &str, group: ResourceGroup) -> Result<(), SimError> {
        let i = self.index_of(id)?;
        let t = &mut self.transfers[i];
        if t.status != TransferStatus::Active {
            return Err(SimError::UnknownTransfer(id.to_string()));
        }
        t.pending_group = Some(group);
        Ok(())
    }

    fn managed_streams(&self) -> u32 {
        self.transfers
            .iter()
            .filter(|t| t.status == TransferStatus::Active)
            .map(|t| t.pending_params.as_ref().map_or(t.params, |p| p.0).streams())
            .sum()
    }

    fn reshape(&mut self, i: usize, params: ParamSet, per_process: Option<Vec<u32>>, fair_share: f64) {
        let r0 = self.net.init_window * self.net.mss_bytes * 8.0 / self.link.rtt;
        let fresh = Stream { rate: r0, ssthresh: fair_share.max(r0), slow_start: true };
        let t = &mut self.transfers[i];
        let cc = params.cc as usize;
        while t.processes.len() > cc {
            let p = t.processes.pop().expect("nonempty");
            if let Some(rem) = p.current {
                t.queue.push_front(rem);
            }
        }
        while t.processes.len() < cc {
            t.processes.push(Process { streams: Vec::new(), pp: params.pp, current: None, gap: 0.0 });
        }
        for (k, p) in t.processes.iter_mut().enumerate() {
            p.streams.truncate(params.p as usize);
            while p.streams.len() < params.p as usize {
                p.streams.push(fresh);
            }
            p.pp = per_process.as_ref().map_or(params.pp, |v| v[k]);
        }
        t.params = params;
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) -> TickObservation {
        let t0 = self.clock;
        let dt = self.tick;
        let t1 = t0 + dt;
        if let Some(&(_, bw)) = self.capacity_changes.iter().rev().find(|c| c.0 <= t0 + 1e-9) {
            self.link.bandwidth = bw;
        }
        let bw = self.link.bandwidth;
        let rtt = self.link.rtt;

        // Apply queued commands.
        let fair = bw / self.managed_streams().max(1) as f64;
        for i in 0..self.transfers.len() {
            if self.transfers[i].status != TransferStatus::Active {
                continue;
            }
            if let Some((params, pp)) = self.transfers[i].pending_params.take() {
                self.reshape(i, params, pp, fair);
            }
            if let Some(g) = self.transfers[i].pending_group.take() {
                self.transfers[i].group = g;
            }
        }

        // Offered load per stream.
        let ca_rate = self.net.ca_gain * self.net.mss_bytes * 8.0 / (rtt * rtt);
        let mut demand: Vec<Vec<Vec<(f64, f64)>>> = Vec::with_capacity(self.transfers.len());
        let mut managed = 0.0;
        for t in &mut self.transfers {
            let mut per_t = Vec::new();
            if t.status == TransferStatus::Active {
                let cap = self.net.stream_cap.min(t.params.bs as f64 * 8.0 / rtt);
                let has_queue = !t.queue.is_empty();
                let mut total = 0.0;
                for p in &mut t.processes {
                    let busy = p.current.is_some() || has_queue;
                    let rates: Vec<(f64, f64)> = p
                        .streams
                        .iter_mut()
                        .map(|s| if busy { grow(s, dt, cap, rtt, ca_rate) } else { (0.0, s.rate) })
                        .collect();
                    total += rates.iter().map(|r| r.0).sum::<f64>();
                    per_t.push(rates);
                }
                // End-system ceiling: storage, NIC group, CPU group.
                let h = &self.host;
                let cc = t.params.cc as f64;
                let spare = t.group.cpu_cap * h.cores - cc * h.cpu_base - h.cpu_per_stream * t.params.streams() as f64;
                let cpu_bound = (spare / h.cpu_per_link * bw).max(0.01 * bw);
                let limit = self.link.v_read.min(self.link.v_write).min(t.group.nic_cap).min(bw).min(cpu_bound);
                if total > limit {
                    let f = limit / total;
                    for proc_rates in &mut per_t {
                        for r in proc_rates.iter_mut() {
                            *r = (r.0 * f, r.1 * f);
                        }
                    }
                    total = limit;
                }
                managed += total;
            }
            demand.push(per_t);
        }
        let external: f64 = self
            .external_flows
            .iter()
            .filter(|f| f.start <= t0 + 1e-9 && t0 + 1e-9 < f.end)
            .map(|f| f.rate)
            .sum();
        let offered = managed + external;
        let (over, goodput_factor) = if offered > bw {
            let o = (offered - bw) / offered;
            (o, bw / offered * (1.0 - self.net.retx_waste * o).max(0.0))
        } else {
            (0.0, 1.0)
        };
        let queuing_delay = rtt * (1.0 + ((offered / bw) - 1.0).clamp(0.0, self.net.queue_cap));
        let loss_p = (self.net.loss_constant * over).min(1.0);

        // Loss events, stream updates, file movement.
        let mut observations = Vec::new();
        let mut delivered = external * goodput_factor;
        for (ti, t) in self.transfers.iter_mut().enumerate() {
            if t.status != TransferStatus::Active {
                continue;
            }
            let mut proc_tp = Vec::with_capacity(t.processes.len());
            let mut moved_total = 0.0;
            let mut done_at: f64 = 0.0;
            for (pi, p) in t.processes.iter_mut().enumerate() {
                let rates = &demand[ti][pi];
                let mut rate_sum = 0.0;
                for (s, &(avg, end)) in p.streams.iter_mut().zip(rates) {
                    rate_sum += avg;
                    s.rate = end;
                    if avg > 0.0 && loss_p > 0.0 && self.rng.random::<f64>() < loss_p {
                        s.rate = (end / 2.0).max(1.0);
                        s.ssthresh = s.rate;
                        s.slow_start = false;
                    }
                }
                let bytes_per_s = rate_sum * goodput_factor / 8.0;
                let mut clock = 0.0;
                let mut moved = 0.0;
                while clock < dt {
                    if p.gap > 0.0 {
                        let g = p.gap.min(dt - clock);
                        p.gap -= g;
                        clock += g;
                        t.idle_seconds += g;
                        continue;
                    }
                    if p.current.is_none() {
                        match t.queue.pop_front() {
                            Some(f) => p.current = Some(f),
                            None => break,
                        }
                    }
                    if bytes_per_s <= 0.0 {
                        break;
                    }
                    let rem = p.current.expect("file in progress");
                    let need = rem / bytes_per_s;
                    if need <= dt - clock {
                        moved += rem;
                        clock += need;
                        p.current = None;
                        if p.pp <= 1 && !t.queue.is_empty() {
                            p.gap = rtt;
                        }
                    } else {
                        moved += bytes_per_s * (dt - clock);
                        p.current = Some(rem - bytes_per_s * (dt - clock));
                        clock = dt;
                    }
                }
                if p.current.is_none() && t.queue.is_empty() {
                    done_at = done_at.max(clock.min(dt));
                } else {
                    done_at = dt;
                }
                moved_total += moved;
                proc_tp.push(moved * 8.0 / dt);
            }
            t.bytes_done += moved_total;
            let finished = t.queue.is_empty() && t.processes.iter().all(|p| p.current.is_none());
            let active = if finished { done_at.max(1e-9) } else { dt };
            delivered += moved_total * 8.0 / dt;

            // Utilization over the active part of the tick.
            let mut procs = Vec::with_capacity(t.processes.len());
            for (p, tp) in t.processes.iter().zip(&proc_tp) {
                let thr = tp * dt / active;
                let mut u = self.host.synthesize(thr, p.streams.len() as u32, t.params.bs, bw, over, self.net.mss_bytes);
                if self.host.jitter > 0.0 {
                    let mut f = u.features();
                    for v in f.iter_mut().skip(2) {
                        *v *= 1.0 + self.host.jitter * (2.0 * self.rng.random::<f64>() - 1.0);
                    }
                    u = Utilization::from_features(f);
                }
                procs.push(u);
            }
            // Keep the group ceilings on the synthesized figures.
            let cpu: f64 = procs.iter().map(|u| u.cpu).sum();
            if cpu > t.group.cpu_cap {
                let f = t.group.cpu_cap / cpu;
                procs.iter_mut().for_each(|u| u.cpu *= f);
            }
            let nic: f64 = procs.iter().map(|u| u.net_bytes_sent * 8.0).sum();
            if nic > t.group.nic_cap {
                let f = t.group.nic_cap / nic;
                procs.iter_mut().for_each(|u| {
                    u.net_bytes_sent *= f;
                    u.pkts_sent *= f;
                });
            }
            let mem: f64 = procs.iter().map(|u| u.mem).sum();
            if mem > 1.0 {
                procs.iter_mut().for_each(|u| u.mem /= mem);
            }
            let feats: Vec<[f64; 10]> = procs.iter().map(|u| u.features()).collect();
            let watts = self.host.power.predict_processes(feats.iter());
            t.energy.push_interval(t0, t0 + active, watts);
            t.energy.add_bytes(moved_total);
            if finished {
                t.status = TransferStatus::Finished;
                t.finished_at = Some(t0 + active);
            }
            observations.push(TransferObservation {
                id: t.id.clone(),
                throughput: moved_total * 8.0 / active,
                goodput: moved_total * 8.0 / dt,
                queuing_delay,
                packet_loss_rate: over,
                processes: procs,
                process_throughput: proc_tp.iter().map(|tp| tp * dt / active).collect(),
                watts,
                active_seconds: active,
                bytes_moved: moved_total,
                bytes_done: t.bytes_done,
                bytes_total: t.total_bytes,
                params: t.params,
                group: t.group,
                finished,
            });
        }
        self.clock = t1;
        TickObservation {
            t0,
            t1,
            transfers: observations,
            link_utilization: delivered / bw,
            link_bandwidth: bw,
            external_goodput: external * goodput_factor,
        }
    }

    /// Log record for a transfer observed in `obs`.
    pub fn log_record(&self, obs: &TickObservation, t: &TransferObservation, epoch: f64) -> Option<TransferLogRecord> {
        let state = self.transfer(&t.id)?;
        Some(TransferLogRecord {
            transfer_id: t.id.clone(),
            timestamp: epoch + obs.t1,
            interval: t.active_seconds,
            rtt: self.link.rtt,
            bandwidth: obs.link_bandwidth.round() as u64,
            queuing_delay: t.queuing_delay,
            packet_loss_rate: t.packet_loss_rate,
            params: t.params,
            dataset: Dataset {
                total_bytes: state.total_bytes.round() as u64,
                file_count: state.workload.file_count as u64,
                mean_file_bytes: state.total_bytes / state.workload.file_count as f64,
            },
            utilization: t.utilization(),
            achieved_throughput: t.throughput,
            measured_power: t.watts,
            capped: false,
        })
    }
}
