//! Numerical laboratory for measures of maximal u-entropy (c-Gibbs u-states)
//! of partially hyperbolic maps that factor over a hyperbolic toral
//! automorphism or an expanding circle map.
//!
//! The crate is organised bottom-up:
//!
//! * [`toral`]: hyperbolic toral automorphisms and Markov partitions of the base.
//! * [`systems`]: concrete maps (solenoids, modified solenoid, derived-from-Anosov).
//! * [`factor`]: semiconjugacies onto the base dynamics.
//! * [`leaves`]: strong-unstable plaques and center-stable holonomy.
//! * [`measures`]: particle reference measures, push-forward, Cesàro states.
//! * [`lyapunov`]: spectra, c-mostly contracting certificates, hyperbolic times.
//! * [`entropy`]: volume growth and conditional u-entropy estimators.
//! * [`skeleton`]: periodic points, skeleton verification, support structure.
//! * [`experiment`]: configuration files, the task runner and run comparison.

pub mod entropy;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod leaves;
pub mod linalg;
pub mod lyapunov;
pub mod measures;
pub mod par;
pub mod skeleton;
pub mod systems;
pub mod toral;

pub use error::{Error, Result};
