use crate::domain::{Utilization, FEATURE_COUNT};
use crate::PowerModel;

/// Bottleneck path and storage rates of one transfer path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Bits/s.
    pub bandwidth: f64,
    /// Seconds.
    pub rtt: f64,
    /// Default socket buffer in bytes.
    pub buffer: u64,
    /// Source storage read rate, bits/s.
    pub v_read: f64,
    /// Destination storage write rate, bits/s.
    pub v_write: f64,
}

impl LinkSpec {
    pub fn valid(&self) -> bool {
        [self.bandwidth, self.rtt, self.v_read, self.v_write].iter().all(|v| *v > 0.0 && v.is_finite())
            && self.buffer > 0
    }

    /// `min(BW, v_read, v_write)`.
    pub fn bottleneck(&self) -> f64 {
        self.bandwidth.min(self.v_read).min(self.v_write)
    }
}

/// Constants of the fluid stream model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetModel {
    pub mss_bytes: f64,
    /// Path-imposed ceiling of one stream, bits/s.
    pub stream_cap: f64,
    /// Per-stream loss probability per unit of overload fraction.
    pub loss_constant: f64,
    /// Congestion-avoidance growth in segments per RTT per RTT.
    pub ca_gain: f64,
    /// Share of overload that is wasted on retransmissions.
    pub retx_waste: f64,
    /// Largest relative queue build-up reported in queuing delay.
    pub queue_cap: f64,
    /// Initial window in segments.
    pub init_window: f64,
}

impl Default for NetModel {
    fn default() -> Self {
        Self {
            mss_bytes: 1460.0,
            stream_cap: 500e6,
            loss_constant: 4.0,
            ca_gain: 1.0,
            retx_waste: 1.0,
            queue_cap: 1.0,
            init_window: 10.0,
        }
    }
}

/// Sending host: resource sizes, utilization synthesis and ground-truth power.
#[derive(Debug, Clone, PartialEq)]
pub struct HostModel {
    pub cores: f64,
    pub mem_bytes: f64,
    /// Cores used by an idle server process.
    pub cpu_base: f64,
    /// Cores used per process at full link rate.
    pub cpu_per_link: f64,
    /// Cores used per stream.
    pub cpu_per_stream: f64,
    /// Resident bytes per process besides socket buffers.
    pub mem_base: f64,
    pub power: PowerModel,
    /// Relative uniform noise on synthesized features.
    pub jitter: f64,
}

/// CPU and NIC ceiling for a transfer's processes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceGroup {
    /// Fraction of the host's cores.
    pub cpu_cap: f64,
    /// Bits/s.
    pub nic_cap: f64,
}

impl ResourceGroup {
    /// Five groups with cpu caps 0.2..=1.0 and NIC caps in proportion.
    pub fn ladder(bandwidth: f64) -> Vec<ResourceGroup> {
        (1..=5).map(|k| ResourceGroup { cpu_cap: 0.2 * k as f64, nic_cap: 0.2 * k as f64 * bandwidth }).collect()
    }
}

/// File sizes of a workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FileSizes {
    Fixed(u64),
    Uniform { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    pub file_count: u32,
    pub file_bytes: FileSizes,
}

impl Workload {
    pub fn valid(&self) -> bool {
        self.file_count >= 1
            && match self.file_bytes {
                FileSizes::Fixed(b) => b > 0,
                FileSizes::Uniform { lo, hi } => lo > 0 && hi >= lo,
            }
    }

    pub fn mean_file_bytes(&self) -> f64 {
        match self.file_bytes {
            FileSizes::Fixed(b) => b as f64,
            FileSizes::Uniform { lo, hi } => (lo as f64 + hi as f64) / 2.0,
        }
    }
}

/// Inelastic cross traffic active on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalFlow {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

impl HostModel {
    /// Utilization of one process moving `throughput` bits/s over `streams` streams.
    pub fn synthesize(
        &self,
        throughput: f64,
        streams: u32,
        buffer: u64,
        link_bw: f64,
        loss: f64,
        mss: f64,
    ) -> Utilization {
        let bytes = throughput / 8.0;
        let cores = self.cpu_base + self.cpu_per_link * throughput / link_bw + self.cpu_per_stream * streams as f64;
        let sent = bytes * (1.0 + loss);
        Utilization {
            cpu: (cores / self.cores).min(1.0),
            mem: ((self.mem_base + streams as f64 * buffer as f64) / self.mem_bytes).min(1.0),
            disk_reads: bytes / 1_048_576.0,
            disk_writes: 0.01 * bytes / 65_536.0,
            disk_bytes_read: bytes,
            disk_bytes_written: 0.01 * bytes,
            net_bytes_sent: sent,
            net_bytes_received: 0.02 * sent,
            pkts_sent: sent / mss,
            pkts_received: 0.5 * sent / mss,
        }
    }

    /// Upper bound on watts for a transfer confined to `group`, with at most
    /// `processes` processes and `streams` streams in total.
    pub fn peak_watts(
        &self,
        group: &ResourceGroup,
        processes: u32,
        streams: u32,
        buffer: u64,
        link_bw: f64,
        mss: f64,
    ) -> f64 {
        let mut u = self.synthesize(group.nic_cap, streams, buffer, link_bw, 1.0, mss);
        u.cpu = group.cpu_cap;
        u.mem = ((processes as f64 * self.mem_base + streams as f64 * buffer as f64) / self.mem_bytes).min(1.0);
        let f = u.features();
        let worst: [f64; FEATURE_COUNT] = std::array::from_fn(|k| {
            let v = if k < 2 { f[k] } else { f[k] * (1.0 + self.jitter) };
            if self.power.coefficients[k] > 0.0 {
                v
            } else {
                0.0
            }
        });
        self.power.predict(&worst)
    }
}

/// Ground-truth power law of the simulated hosts.
pub fn default_power_model() -> PowerModel {
    PowerModel::new(
        [
            150.0,  // cpu fraction
            20.0,   // mem fraction
            2e-3,   // disk reads/s
            3e-3,   // disk writes/s
            4e-9,   // disk bytes read/s
            6e-9,   // disk bytes written/s
            8e-9,   // net bytes sent/s
            8e-9,   // net bytes received/s
            2e-6,   // packets sent/s
            2e-6,   // packets received/s
        ],
        110.0,
    )
    .expect("valid constants")
}
