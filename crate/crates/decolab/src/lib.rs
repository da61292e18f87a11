//! Decoherence laboratory for a spin-1/2 particle in an inhomogeneous field,
//! coupled to an Ohmic heat bath.
//!
//! The crate has four layers:
//!
//! * [`model`] — physical parameters, grids, spin sectors, and the
//!   density-matrix container shared by everything else.
//! * [`analytic`] — closed-form reduced density matrices in the position and
//!   momentum representations, their short-time limits, and the decoherence
//!   timescale formulas.
//! * [`evolve`] — a fourth-order finite-difference / Runge-Kutta integrator
//!   for the per-sector master equation, used as an independent check of the
//!   analytic layer.
//! * [`analysis`] — basis transforms, moments, purity, coherence-decay fits,
//!   and Gaussian pointer-state fits.
//!
//! The [`cli`] module wires these into configuration-driven experiments with
//! deterministic CSV/JSON output.

pub mod analysis;
pub mod analytic;
pub mod cli;
pub mod error;
pub mod evolve;
pub mod model;

pub use error::{Error, Result};
