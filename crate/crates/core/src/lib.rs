//! Extinction spectroscopy of a single two-level emitter coupled to an
//! arbitrary passive, linear photonic structure.
//!
//! The crate covers the whole analysis chain:
//!
//! - [`spectra`]: steady-state Bloch solution and the transmission /
//!   reflection / Fano forward models.
//! - [`geometries`]: closed forms for a continuous waveguide and a symmetric
//!   weakly coupled cavity.
//! - [`fitting`]: damped Gauss-Newton engine, Lorentzian and Fano fits,
//!   zero-power extrapolation of a pump-power series.
//! - [`inversion`]: closed-form `(V0, q0) -> (beta, phi_T)` inversion,
//!   branch selection and Monte-Carlo error propagation.
//! - [`localization`]: coupling-map loading, phase contours and dipole
//!   orientation.
//! - [`synth`]: seeded synthetic experiments.
//! - [`io`]: the spectrum CSV format.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod fitting;
pub mod geometries;
pub mod inversion;
pub mod io;
pub mod localization;
pub mod spectra;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use spectra::{CouplingParams, EmitterParams, Spectrum, SpectrumPoint};
