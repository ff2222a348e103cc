//! Analysis engine for sequential continuous-variable quantum secret sharing.
//!
//! A chain of `n` players injects Gaussian-modulated coherent states into a
//! single circulating optical mode; the dealer at the end of the fiber
//! measures both quadratures. The crate covers:
//!
//! * [`model`]: system parameters, network layout and the noise budget
//!   referred to the honest player's channel input,
//! * [`keyrate`]: asymptotic reverse-reconciliation key rates with a trusted
//!   heterodyne detector, and the min-over-players secret-sharing rate,
//! * [`oracle`]: symplectic spectra computed from explicit covariance
//!   matrices, used to cross-check the closed forms,
//! * [`optimize`]: search over the shared modulation variance,
//! * [`montecarlo`]: phase-space simulation of the quantum stage,
//! * [`postprocess`]: parameter estimation on simulated batches and the
//!   XOR `(n, n)` sharing primitive.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` style guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod keyrate;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod oracle;
pub mod postprocess;
pub mod rng;
pub(crate) mod stats;

pub use keyrate::{KeyRateError, KeyRateReport, ModulationPolicy, PlayerRate};
pub use model::{NetworkLayout, NoiseBudget, ParamError, SystemParams};
pub use optimize::{OptimizationResult, OptimizerConfig};
