//! Numerical laboratory for a linear size-structured two-phase population model.
//!
//! Individuals carry a size `s` in `[0, m]` and live in one of two stages: an
//! *active* phase (density `u1`) in which they grow, reproduce and die, and a
//! *resting* phase (density `u2`) in which they only grow. The coupled
//! transport system
//!
//! ```text
//! u1_t + (gamma1(s) u1)_s = -mu(s) u1 + \int_0^m beta(s,y) u1(y,t) dy - c1(s) u1 + c2(s) u2
//! u2_t + (gamma2(s) u2)_s = c1(s) u1 - c2(s) u2
//! ```
//!
//! with zero influx at `s = 0` is simulated by operator splitting
//! (donor-cell upwind transport plus explicit reaction/birth), and its
//! long-time behavior is probed three independent ways: the scalar
//! characteristic function `K(lambda)` of the active phase with separable
//! birth, rank-n determinant generalizations for kernels bounded by sums of
//! separable terms, and the dominant eigenvalue of the discretized generator.
//!
//! Modules:
//! - [`coeffs`]: coefficient functions, birth kernels, validated parameters.
//! - [`solver`]: grid, splitting integrator, trajectories.
//! - [`spectral`]: `K(lambda)`, root solves, generator matrix, power iteration.
//! - [`asymptotics`]: growth-rate fits, AEG checks, extinction/irreducibility.
//! - [`config`]: TOML run configuration.
//! - [`runner`]: task dispatch and CSV emission.

// Negated comparisons like `!(x > 0.0)` are deliberate in validation and
// bracketing code: NaN must take the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod runner;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
