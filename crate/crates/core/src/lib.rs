//! Loschmidt echo of the perturbed kicked rotor.
//!
//! The exact quantum fidelity is computed with an FFT split-step propagator
//! on an `n`-site torus; the semiclassical one averages dephasing factors of
//! single classical orbits launched at every initial momentum. Analytic
//! regime laws, classical diffusion constants and action statistics are
//! provided alongside, and [`runner`] ties them together into reproducible
//! experiments.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bessel;
pub mod classical;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod model;
pub mod parallel;
pub mod plot;
pub mod quantum;
pub mod runner;
pub mod semiclassical;
pub mod summation;

pub use config::{ExperimentConfig, Preset};
pub use error::{Error, Result};
pub use model::{FidelityCurve, MapParams, PathLabel, StateSpec};
pub use runner::{run_diagnostic, run_experiment, DiagnosticKind, RunManifest};
