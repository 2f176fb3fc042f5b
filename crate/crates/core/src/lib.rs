//! Linearized quantum Maxwell-Bloch model of an inhomogeneously broadened
//! two-level ensemble.
//!
//! The crate is split along the physics:
//!
//! - [`model`]: parameters, discretization grids, pulse sequences and the
//!   ledger of input modes.
//! - [`kernel`]: Bogoliubov input-output maps for ground (absorbing) and
//!   inverted (amplifying) propagation, ideal pi pulses and the two-pulse
//!   echo / rephased ASE compositions.
//! - [`correlators`]: Gaussian moments over vacuum inputs, Wick intensity
//!   correlations and the Cauchy-Schwarz ratio.
//! - [`integrator`]: semiclassical nonlinear Bloch integrator and the linear
//!   ODE oracle used to cross-check the kernel engine.
//! - [`paraxial`]: transverse-wavevector bookkeeping and phase matching.
//! - [`tolerances`]: pass/fail thresholds shared by tests and the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlators;
pub mod error;
pub mod integrator;
pub mod kernel;
pub mod model;
pub mod paraxial;
pub mod tolerances;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
