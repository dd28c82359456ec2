//! Over-the-air federated learning with a movable-antenna server.
//!
//! The crate covers the whole per-round pipeline:
//!
//! * [`channel`]: line-of-sight movable-antenna and Rayleigh channel models;
//! * [`ota`]: analog over-the-air gradient aggregation with power control;
//! * [`surrogate`]: the per-round convergence surrogate `r(q, e; H)`;
//! * [`pdd`]: the penalty dual decomposition scheduler that jointly picks
//!   users, the receive beamformer and antenna positions;
//! * [`baselines`]: reference schedulers and a brute-force oracle;
//! * [`fltrain`]: FedSGD on MNIST driving all of the above.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common double-precision case.

// `!(x > 0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod fltrain;
pub mod linalg;
pub mod ota;
pub mod pdd;
mod scalar;
pub mod surrogate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AntennaLayout64 = channel::AntennaLayout<f64>;
pub type ChannelSet64 = channel::ChannelSet<f64>;
pub type OtaConfig64 = ota::OtaConfig<f64>;
pub type PddConfig64 = pdd::PddConfig<f64>;
pub type PddResult64 = pdd::PddResult<f64>;
pub type PddProblem64 = pdd::PddProblem<f64>;
pub type TrainConfig64 = fltrain::TrainConfig<f64>;

pub type AntennaLayout32 = channel::AntennaLayout<f32>;
pub type ChannelSet32 = channel::ChannelSet<f32>;
pub type OtaConfig32 = ota::OtaConfig<f32>;
pub type PddConfig32 = pdd::PddConfig<f32>;
pub type PddResult32 = pdd::PddResult<f32>;

/// Formats a real with 12 significant digits for CSV output.
pub fn csv_real<T: Real>(x: T) -> String {
    format!("{:.11e}", x.as_f64())
}
