//! Energy-aware tuning of bulk data transfers.
//!
//! The crate is organised as a pipeline: [`logstore`] ingests historical
//! transfer samples, [`offline`] turns them into per-cluster surfaces and a
//! precomputed [`offline::SolutionCache`], and the controllers in [`control`]
//! consult that cache while a transfer runs inside the [`simnet`] simulator.
//!
//! Numeric kernels are generic over [`num::Scalar`]; the aliases below fix
//! them to `f64`, which is what the rest of the crate uses.

pub mod control;
pub mod domain;
pub mod fairness;
pub mod linalg;
pub mod logstore;
pub mod num;
pub mod offline;
pub mod simnet;
pub mod spline;

pub use domain::{ParamLimits, ParamSet, SlaKind, SlaSpec, Utilization};

/// Affine power model in double precision.
pub type PowerModel = domain::AffinePowerModel<f64>;
/// One-dimensional natural cubic spline in double precision.
pub type Spline = spline::NaturalSpline<f64>;
/// Tensor-product natural cubic spline in double precision.
pub type Spline2 = spline::TensorSpline<f64>;
