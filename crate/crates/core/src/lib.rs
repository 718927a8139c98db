//! Numerical certification that a globally asymptotically stable equilibrium
//! of a dissipative system `x' = f(x, eps)` persists for small `|eps|`.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: the expression language for vector-field components, with
//!   exact symbolic differentiation.
//! - [`models`]: parameterized systems, their domains and the builtin registry.
//! - [`integrator`]: adaptive Dormand–Prince trajectories with dense output.
//! - [`spectral`]: Newton equilibria, eigenvalues, index classification and
//!   equilibrium-branch continuation.
//! - [`certify`]: absorbing-set and attractor estimates, the persistence
//!   certificate, uniform-in-time closeness and positive-cone persistence.

pub mod certify;
pub mod exec;
pub mod expr;
pub mod geom;
pub mod integrator;
pub mod models;
pub mod report;
pub mod sampling;
pub mod spectral;

pub use expr::{differentiate, parse, Ast};
pub use integrator::{integrate, IntegratorConfig, Status, Trajectory};
pub use models::{builtin, SystemDef};

/// Version stamped into every report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
