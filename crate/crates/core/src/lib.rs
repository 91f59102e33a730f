//! Multiscale statistics with multiplicative interval weights.
//!
//! The partial sum process of a series is measured in the seminorm
//! `max |S(j/n) - S(i/n)| / rho((j - i)/n)` over a grid of intervals. Its
//! Brownian limit calibrates tests for a signal, goodness-of-fit tests against a
//! fixed mean or the constant class, and intervals of significance for
//! changepoints reduced by narrowest significance pursuit. Locally stationary
//! noise is handled through a blocked variance profile and a conditional
//! Gaussian bootstrap.
//!
//! The numerical core is generic over [`Scalar`] (`f32`, `f64`); Monte-Carlo
//! calibration runs in `f64`.

// `!(x > y)` also rejects NaN, which `x <= y` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical_values;
pub mod error;
pub mod grids;
pub mod inference;
pub mod process;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod statistics;
pub mod variance;

pub use critical_values::{BootstrapConfig, CriticalValueTable};
pub use error::{Error, Result};
pub use grids::{GridKind, IntervalGrid};
pub use inference::{ChangepointReport, PipelineConfig, SignificantInterval, TestDecision};
pub use process::{Modulus, ModulusFamily, PartialSumProcess, TimeSeries};
pub use scalar::Scalar;
pub use statistics::{SignalSpec, StatisticResult};
pub use variance::{VarianceEstimate, VarianceProfile};

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type PartialSumProcessF64 = PartialSumProcess<f64>;
pub type PartialSumProcessF32 = PartialSumProcess<f32>;
pub type VarianceProfileF64 = VarianceProfile<f64>;
pub type VarianceProfileF32 = VarianceProfile<f32>;
pub type SignalSpecF64 = SignalSpec<f64>;
pub type SignalSpecF32 = SignalSpec<f32>;
