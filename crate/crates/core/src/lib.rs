//! Simulation and evaluation toolkit for multi-pulse quantum sensing.
//!
//! * [`qcore`]: small dense complex algebra and qubit process matrices.
//! * [`control`]: pulse segments, composite pulses, decoupling trains.
//! * [`evalfn`]: the flip-quality function `F_QS`, gate fidelity `F_QC`,
//!   sensitivity link and ensemble averages.
//! * [`tomo`]: simulated process tomography with linear inversion and
//!   positivity projection.
//! * [`optim`]: gradient-ascent design of composite π pulses.
//! * [`sense`]: spin-echo AC magnetometry with photon shot noise.
//! * [`nmr`]: CPMG detection of a small nuclear spin bath.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dephasing;
pub mod error;
pub mod evalfn;
pub mod fit;
pub mod nmr;
pub mod optim;
pub mod qcore;
pub mod sense;
pub mod sweep;
pub mod tomo;

pub use error::{Error, Result};

/// Crate version embedded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
