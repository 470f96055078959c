//! Simulation and bifurcation toolkit for networks of diffusively coupled
//! excitable neuron units.
//!
//! The crate is organized around a pipeline:
//!
//! * [`model`] — the two-dimensional excitable unit, the diffusive coupling,
//!   the assembled network vector field and its analytic Jacobian.
//! * [`integrate`] — adaptive embedded Runge-Kutta 5(4) integration with
//!   dense output and section-crossing location.
//! * [`equilibria`] — Newton refinement, exhaustive enumeration and
//!   eigenvalue classification of network equilibria, plus one-parameter
//!   equilibrium continuation with fold/Hopf detection.
//! * [`attractors`] — Monte-Carlo attractor discovery: random initial
//!   conditions, feature extraction, threshold grouping, parameter sweeps.
//! * [`lyapunov`] — Lyapunov spectra via tangent-space integration with QR
//!   reorthonormalization, and dynamical classification.
//! * [`continuation`] — periodic orbits by Poincaré shooting, pseudo-arclength
//!   continuation, Floquet multipliers, SNLC/torus/homoclinic detection.
//! * [`geometry`] — stable/unstable manifolds of the uncoupled saddle and
//!   reinjection diagnostics of coupled trajectories against them.

pub mod attractors;
pub mod continuation;
pub mod equilibria;
mod error;
pub mod geometry;
pub mod integrate;
pub mod lyapunov;
pub mod model;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
