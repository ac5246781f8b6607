//! Drive synthesis and performance limits for spectro-temporal unitary
//! optical modulators.
//!
//! A continuous-wave carrier passes through `N` stages, each a phase
//! modulator followed by an all-pass dispersive element. The library finds
//! bandlimited phase drives that shape the carrier into a target coherent
//! waveform (root-raised-cosine QAM by default) using a wavefront-matching
//! iteration, and evaluates the resulting fidelity under stage count,
//! dispersion, modulator bandwidth, DAC resolution and shot noise. A
//! conventional IQ Mach-Zehnder transmitter is modelled as the baseline.
//!
//! Time is measured in symbol periods `T_s` and frequency in units of the
//! symbol rate `f_s` throughout.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod signal;
pub mod spectral;
pub mod sweep;
pub mod wavefront;

#[cfg(test)]
mod properties;

pub use error::{Error, Result};
pub use num_complex::Complex64;
