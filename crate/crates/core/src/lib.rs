//! Simulation engine for unsaturated flow in deformable porous media with
//! Preisach pressure-saturation hysteresis and gravity.
//!
//! The engine implements an implicit time-discrete scheme for the coupled
//! system
//!
//! ```text
//! (G[u] + v)_t = div( kappa(x, G[u]) (grad u + nu) ),   v_t + v = u,
//! ```
//!
//! with Robin boundary flux b* (u - u*), where `G` is a Preisach hysteresis
//! operator built from play elements over a threshold grid. Each step solves a
//! quasilinear elliptic problem by damped Newton iterations; the structural
//! identities of the scheme (mass conservation, nonnegative dissipation
//! channels, the energy inequality, uniform sup bounds, the BV-log sum) are
//! verified at runtime and exposed as per-step diagnostics.
//!
//! Module map:
//! - [`hysteresis`]: play and Preisach operators, memory state, potential and
//!   dissipation decomposition, the convexity-inequality checker;
//! - [`density`]: density families with closed-form primitives, mass
//!   integrals, initial memory curves, compatibility validation;
//! - [`grid`]: meshes, fields, weak-form assembly, CG linear solves;
//! - [`stepper`]: the implicit time loop, tau sweeps, checkpoints;
//! - [`diagnostics`]: per-step reports of the structural identities;
//! - [`scenario`]: the JSON scenario schema and its realization.

pub mod compat;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hysteresis;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};

/// Format a float with 17 significant digits; round-trips any f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}
