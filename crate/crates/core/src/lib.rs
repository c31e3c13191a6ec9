//! Continuous-time accelerated gradient flows derived by stabilizing the
//! implicit manifold `x2 + beta * grad f(x1) = 0` of a double integrator.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation:
//!
//! * [`objective`]: strongly convex test objectives and derivative checks.
//! * [`dynamics`]: right-hand sides of every ODE family, the two control
//!   laws, and the manifold residual / storage / Lyapunov scalars.
//! * [`integrate`]: fixed-step Euler and RK4, perturbation injection, and
//!   [`Trajectory`](integrate::Trajectory) recording.
//! * [`oracle`]: exact solutions on quadratics through the matrix exponential.
//! * [`diagnostics`]: post-hoc certificate checks and decay-rate fitting.
//!
//! File formats, the experiment runner and the command line live in the
//! `manifold-descent` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod integrate;
pub mod linalg;
pub mod objective;
pub mod oracle;

pub use error::{Error, Result};

pub use diagnostics::DiagnosticsReport;
pub use dynamics::{Family, MethodSpec, PhaseState};
pub use integrate::{IntegratorConfig, PerturbationSpec, Scheme, Termination, Trajectory};
pub use objective::{ConvexityParams, Objective, Quadratic, QuadraticKind};
