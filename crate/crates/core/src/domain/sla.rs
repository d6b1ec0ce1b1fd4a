use std::fmt;
use std::str::FromStr;

use super::DomainError;

/// Which quantity an agreement constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlaKind {
    /// Minimum throughput (bits/s).
    ThroughputGuarantee,
    /// Total transfer energy budget (J).
    TotalEnergyCap,
    /// Instantaneous power ceiling (W).
    InstantPowerCap,
}

impl SlaKind {
    pub const ALL: [SlaKind; 3] =
        [SlaKind::ThroughputGuarantee, SlaKind::TotalEnergyCap, SlaKind::InstantPowerCap];

    /// Single-letter token used in files and on the command line.
    pub fn token(&self) -> &'static str {
        match self {
            SlaKind::ThroughputGuarantee => "T",
            SlaKind::TotalEnergyCap => "E",
            SlaKind::InstantPowerCap => "P",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            SlaKind::ThroughputGuarantee => 0,
            SlaKind::TotalEnergyCap => 1,
            SlaKind::InstantPowerCap => 2,
        }
    }
}

impl fmt::Display for SlaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SlaKind {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" | "t" => Ok(SlaKind::ThroughputGuarantee),
            "E" | "e" => Ok(SlaKind::TotalEnergyCap),
            "P" | "p" => Ok(SlaKind::InstantPowerCap),
            other => Err(DomainError::InvalidParam(format!("unknown SLA kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlaSpec {
    pub kind: SlaKind,
    pub value: f64,
    /// Throughput tolerance in bits/s.
    pub epsilon: f64,
}

impl SlaSpec {
    pub fn new(kind: SlaKind, value: f64, epsilon: f64) -> Result<Self, DomainError> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(DomainError::InvalidParam("SLA value must be positive".into()));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(DomainError::InvalidParam("epsilon must be >= 0".into()));
        }
        Ok(Self { kind, value, epsilon })
    }

    /// Throughput guarantee with the default tolerance of 5% of the target.
    pub fn throughput(t_sla: f64) -> Result<Self, DomainError> {
        Self::new(SlaKind::ThroughputGuarantee, t_sla, 0.05 * t_sla)
    }
}
