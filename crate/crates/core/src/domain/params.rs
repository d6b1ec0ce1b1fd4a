use std::ops::Add;

use super::DomainError;

/// Tunable transfer knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamSet {
    /// Concurrency: number of server processes.
    pub cc: u32,
    /// Parallel streams per process.
    pub p: u32,
    /// Outstanding file requests per process.
    pub pp: u32,
    /// Socket buffer size in bytes.
    pub bs: u64,
}

impl ParamSet {
    pub fn new(cc: u32, p: u32, pp: u32, bs: u64) -> Result<Self, DomainError> {
        let s = Self { cc, p, pp, bs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.cc == 0 || self.p == 0 || self.pp == 0 || self.bs == 0 {
            return Err(DomainError::InvalidParam(format!(
                "cc, p, pp and bs must be positive (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Total stream count `cc * p`.
    pub fn streams(&self) -> u32 {
        self.cc * self.p
    }

    /// Copy with `cc` and `p` clamped into the given limits.
    pub fn clamped(&self, limits: &ParamLimits) -> Self {
        Self {
            cc: self.cc.clamp(1, limits.cc_limit),
            p: self.p.clamp(1, limits.p_limit),
            pp: self.pp.clamp(1, limits.pp_max),
            bs: self.bs,
        }
    }

    pub fn within(&self, limits: &ParamLimits) -> bool {
        self.cc <= limits.cc_limit && self.p <= limits.p_limit && self.pp <= limits.pp_max
    }
}

/// User limits on the knobs plus the AIMD constants applied to them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamLimits {
    pub cc_limit: u32,
    pub p_limit: u32,
    pub pp_max: u32,
    pub alpha_cc: u32,
    pub alpha_p: u32,
    pub beta1: f64,
    pub beta2: f64,
}

impl ParamLimits {
    pub fn new(cc_limit: u32, p_limit: u32, pp_max: u32) -> Result<Self, DomainError> {
        let l = Self { cc_limit, p_limit, pp_max, ..Self::default() };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.cc_limit == 0 || self.p_limit == 0 || self.pp_max == 0 {
            return Err(DomainError::InvalidParam("limits must be >= 1".into()));
        }
        if self.alpha_cc == 0 || self.alpha_p == 0 {
            return Err(DomainError::InvalidParam("additive steps must be >= 1".into()));
        }
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(DomainError::InvalidParam("decrease factors must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for ParamLimits {
    fn default() -> Self {
        Self { cc_limit: 8, p_limit: 8, pp_max: 16, alpha_cc: 1, alpha_p: 1, beta1: 0.75, beta2: 0.75 }
    }
}

pub const FEATURE_COUNT: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "cpu",
    "mem",
    "disk_reads",
    "disk_writes",
    "disk_bytes_read",
    "disk_bytes_written",
    "net_bytes_sent",
    "net_bytes_received",
    "pkts_sent",
    "pkts_received",
];

/// End-system resource usage over one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Utilization {
    pub cpu: f64,
    pub mem: f64,
    pub disk_reads: f64,
    pub disk_writes: f64,
    pub disk_bytes_read: f64,
    pub disk_bytes_written: f64,
    pub net_bytes_sent: f64,
    pub net_bytes_received: f64,
    pub pkts_sent: f64,
    pub pkts_received: f64,
}

impl Utilization {
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.cpu,
            self.mem,
            self.disk_reads,
            self.disk_writes,
            self.disk_bytes_read,
            self.disk_bytes_written,
            self.net_bytes_sent,
            self.net_bytes_received,
            self.pkts_sent,
            self.pkts_received,
        ]
    }

    pub fn from_features(f: [f64; FEATURE_COUNT]) -> Self {
        Self {
            cpu: f[0],
            mem: f[1],
            disk_reads: f[2],
            disk_writes: f[3],
            disk_bytes_read: f[4],
            disk_bytes_written: f[5],
            net_bytes_sent: f[6],
            net_bytes_received: f[7],
            pkts_sent: f[8],
            pkts_received: f[9],
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let f = self.features();
        if !(0.0..=1.0).contains(&self.cpu) || !(0.0..=1.0).contains(&self.mem) {
            return Err(DomainError::InvalidParam("cpu and mem must lie in [0, 1]".into()));
        }
        if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(DomainError::InvalidParam("rates must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Feature-wise sum. Fractions are not re-clamped; callers aggregating
/// processes on one host keep them below one by construction.
impl Add for Utilization {
    type Output = Utilization;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.features(), rhs.features());
        Self::from_features(std::array::from_fn(|i| a[i] + b[i]))
    }
}
