//! Simulation engine and bound-verification harness for a two-species
//! reaction-diffusion system with a non-local inflow term.
//!
//! The model couples a locally reproducing species `u` (logistic growth with
//! a strong Allee effect) to a second species `v` that enters the domain
//! through a small portal region at a rate proportional to the domain-wide
//! total of `u`. Both species diffuse and the boundary is impermeable
//! (zero-flux). The crate provides:
//!
//! * [`grid`] — uniform cell-centered grids, scalar fields, midpoint
//!   quadrature, the five-point zero-flux Laplacian, and the normalized
//!   portal profile;
//! * [`model`] — the reaction terms and the non-local inflow;
//! * [`elliptic`] — matrix-free conjugate-gradient solves of the two
//!   stationary problems the analytic bounds rely on;
//! * [`integrator`] — first-order IMEX time stepping (explicit reaction,
//!   implicit diffusion);
//! * [`functionals`] — scalar diagnostics (`U`, `V`, `Φ`, `Ψ`, `ξ`) and the
//!   analytic bounds (trapezoid region, `V_up`, the `L²` envelope `E`);
//! * [`verify`] — machine-checkable assertions over simulation output and
//!   the healing/chronic course classifier;
//! * [`config`], [`cli`], [`svg`] — scenario presets, the flat key/value
//!   config format, the command-line front end, and a dependency-free SVG
//!   line-chart emitter.

pub mod cli;
pub mod config;
pub mod elliptic;
pub mod functionals;
pub mod grid;
pub mod integrator;
pub mod model;
pub mod svg;
pub mod verify;

/// Format a float with 17 significant digits, enough to round-trip any f64.
pub(crate) fn g17(x: f64) -> String {
    format!("{:.16e}", x)
}
