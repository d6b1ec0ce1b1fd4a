//! Vocabulary types plus the power and energy models.

mod energy;
mod params;
mod power;
mod sla;

pub use energy::{total_energy, EnergyAccount, UtilizationSeries};
pub use params::{ParamLimits, ParamSet, Utilization, FEATURE_COUNT, FEATURE_NAMES};
pub use power::{fit_power_model, predict_power, AffinePowerModel};
pub use sla::{SlaKind, SlaSpec};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("design matrix is rank deficient; samples are not varied enough")]
    DegenerateDesign,
    #[error("process series lengths or times differ")]
    GridMismatch,
    #[error("power model text: {0}")]
    ModelFormat(String),
}
