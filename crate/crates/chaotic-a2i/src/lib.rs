//! Chaotic analog-to-information conversion.
//!
//! A sparse multitone signal drives one channel of a chaotic system; the
//! converter records short-time integrals of a single observed coordinate,
//! taken over windows much longer than the signal's Nyquist interval. The
//! crate provides the pieces of that pipeline and its analysis:
//!
//! * [`signals`] — even-sized Fourier dictionaries on the unit interval and
//!   sparse coefficient vectors drawn from them.
//! * [`dynamics`] — the forced Lorenz system behind the converter and
//!   fixed-step RK4 integration, plain or with forward sensitivities.
//! * [`measurement`] — integrate-and-dump window plans and measurement
//!   vectors.
//! * [`identifiability`] — sensitivity matrices, regularized correlation
//!   analysis, and the local reconstructability check built on it.
//! * [`reconstruct`] — sparse recovery of the driving signal from the dump
//!   sequence by multiple-shooting, iteratively reweighted nonlinear least
//!   squares.
//! * [`spectrum`] — periodogram-based bandwidth estimates of chaotic
//!   trajectories, used to size the converter against the signal.
//!
//! Numerics are generic over the float width via [`num::Scalar`]; the
//! `*64` aliases at the crate root fix `f64` for everyday use.

pub mod dynamics;
pub mod error;
pub mod identifiability;
pub mod linalg;
pub mod measurement;
pub mod num;
pub mod reconstruct;
pub mod rng;
pub mod signals;
pub mod spectrum;
mod variational;

pub use error::{Error, Result};
pub use num::Scalar;

/// `f64` Fourier dictionary.
pub type Basis64 = signals::FourierBasis;
/// `f64` sparse signal.
pub type Signal64 = signals::SparseSignal<f64>;
/// `f64` Lorenz configuration.
pub type Lorenz64 = dynamics::LorenzConfig<f64>;
/// `f64` trajectory grid.
pub type Trajectory64 = dynamics::TrajectoryGrid<f64>;
/// `f64` measurement plan.
pub type Plan64 = measurement::MeasurementPlan<f64>;
/// `f64` measurement vector.
pub type Measurements64 = measurement::MeasurementVector<f64>;
/// `f64` sensitivity/correlation report.
pub type Report64 = identifiability::SensitivityReport<f64>;
/// `f64` reconstruction result.
pub type Reconstruction64 = reconstruct::ReconstructionResult<f64>;
