//! Reduced-order simulation of electrostatically driven MEMS cantilever
//! resonators operated as frequency doublers.
//!
//! The crate is organised bottom-up:
//!
//! - [`device`]: beam, material, electrodes, damping, built-in presets
//! - [`modal`]: clamped-free modes (closed form) and a Hermite FE cross-check
//! - [`electrostatics`]: distributed gap capacitance, forces, drive wiring,
//!   motional current, static equilibrium and pull-in
//! - [`rom`]: the single-mode reduced-order model tying those together
//! - [`transient`]: fixed-step RK4 trajectories and frequency sweeps
//! - [`spectral`]: amplitude spectra, resonance fits, spectral purity
//! - [`harness`]: the modal / sweep / doubling / report pipelines behind the CLI
//! - [`io`]: CSV and JSON writers and readers for every exported table

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod device;
pub mod electrostatics;
pub mod error;
pub mod harness;
pub mod io;
pub mod modal;
pub mod quadrature;
pub mod rom;
pub mod spectral;
pub mod transient;

pub use error::{Error, Result};
