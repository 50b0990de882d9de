//! Adaptive direction-guided structure tensor total variation (ADSTV).
//!
//! This crate holds the numerical core: the planar [`Image`] container and
//! quality metrics, discrete differential operators, the (directional)
//! patch-based Jacobian with its adjoint, the directional parameter
//! estimator and the dual fast-gradient-projection solver. TV, STV and
//! EADTV are all reachable as configurations of the same solver.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the benchmark harness live in the `adstv` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diff;
pub mod dpe;
mod error;
pub mod image;
mod math;
pub mod metrics;
pub mod solver;
pub mod tensor;

pub use crate::error::{Error, Result};
pub use crate::image::{Image, NoiseSpec};
pub use crate::metrics::QualityReport;
