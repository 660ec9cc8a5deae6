//! Simulation and numerical verification of non-autonomous lattice
//! reaction–diffusion systems
//!
//! ```text
//! u_i' = ν (u_{i-1} − 2u_i + u_{i+1}) − λ u_i + F(u_i) + g_i(t),   i ∈ ℤ,
//! ```
//!
//! driven by forcings `g` from the hull of a translation-compact `f`.
//!
//! - [`lattice`]: truncated ℓ² vectors, `D⁺`, `D⁻`, `Λ`, the Nemytskii map and the vector field.
//! - [`forcing`]: forcing functions, time shifts, the compact-open metric, tail indices.
//! - [`integrator`]: RK4 / Dormand–Prince integration, i.e. the cocycle `φ(t, v, g)`.
//! - [`diagnostics`]: energy envelope, absorbing ball, cutoff and weighted-tail checks.
//! - [`attractor`]: point-cloud sections, semi-distance, attraction and invariance.

pub mod attractor;
pub mod diagnostics;
pub mod forcing;
pub mod integrator;
pub mod lattice;
pub mod sampling;

pub use attractor::{AttractorApprox, AttractorError, EnsembleSpec, SetSample};
pub use diagnostics::{CutoffFunction, DiagnosticsError, EnergyRecord, TailRecord};
pub use forcing::{ForcingError, ForcingFunction};
pub use integrator::{IntegrateError, IntegratorConfig, Method, Trajectory};
pub use lattice::{LatticeVector, ModelError, ModelParams, NonlinearitySpec};
