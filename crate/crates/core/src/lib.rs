//! # combqkd
//!
//! Simulation and planning toolkit for a fully connected continuous-variable
//! QKD network fed by a single frequency-comb entanglement source.
//!
//! A below-threshold type-II nondegenerate OPA emits signal/idler teeth at
//! `ω₀ ∓ nΩ` / `ω₀ ± nΩ` that are pairwise EPR entangled. A central node routes
//! one tooth pair to every user pair, so N users share N(N−1)/2 independent
//! two-mode squeezed states.
//!
//! The crate is split along the physical pipeline:
//!
//! - [`gaussian`]: two-mode covariance matrices, symplectic eigenvalues, the
//!   bosonic entropy function and physicality diagnostics.
//! - [`opo`]: steady-state mean fields, technical-noise spectra (seed excess
//!   noise and cavity-length jitter), the source covariance at a comb tooth,
//!   and cavity design rules.
//! - [`link`]: central-node insertion loss, lossy noisy fiber, waveshaper and
//!   detector model.
//! - [`keyrate`]: asymptotic direct-reconciliation key rate (A heterodyne,
//!   B homodyne).
//! - [`planner`]: comb-tooth budget, allocation over the complete graph and an
//!   independent plan verifier.
//! - [`config`], [`sweep`], [`exec`]: batch configuration, deterministic
//!   parameter sweeps and the (optionally rayon-backed) evaluation pool.
//!
//! All quadrature variances are in shot-noise units (vacuum = 1).

#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod exec;
pub mod gaussian;
pub mod keyrate;
pub mod link;
pub mod opo;
pub mod planner;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Executor;
pub use gaussian::{DeltaConvention, SymplecticPair, TwoModeCovariance};
pub use keyrate::KeyRateReport;
pub use link::LinkParams;
pub use opo::{NoiseBreakdown, OpoParams, SeedNoiseModel};
pub use planner::{NetworkPlan, NetworkSpec};
