//! Finite-element solver core for the stationary NLS equation
//! `-u'' + λu = (u⁺)^p` on compact metric graphs with Kirchhoff vertex
//! conditions.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: metric graphs (topology + edge lengths) and validation.
//! - [`quad`]: Gauss–Legendre rules and adaptive Simpson quadrature.
//! - [`mesh`]: per-edge uniform P1 meshes with shared vertex dofs, stiffness
//!   and mass assembly, norms and point evaluation.
//! - [`linalg`]: a structured direct solver exploiting the "tridiagonal per
//!   edge + small vertex coupling block" shape of all assembled operators.
//! - [`functionals`]: action, gradient, Hessian, and Nehari-manifold helpers.
//! - [`profiles`]: the soliton profile, rescaled/truncated copies of it, and
//!   peak ansatz construction.
//! - [`solvers`]: linear Kirchhoff solves, damped Newton, least-action search,
//!   peaked-solution refinement, and λ-continuation sweeps.
//! - [`spectral`]: linearized operators and shift-invert eigensolves (kernel
//!   counting, nondegeneracy checks).
//! - [`analysis`]: peak detection, profile-error and decay diagnostics,
//!   log-log scaling fits.
//!
//! Everything is deterministic: no threading, no hash-order iteration, and
//! all randomized restarts draw from a caller-seeded ChaCha stream.

// Tolerance and monotonicity checks are written as negated comparisons
// (`!(a <= b)`) on purpose: unlike `a > b`, they treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod functionals;
pub mod graph;
pub mod linalg;
pub mod mesh;
pub mod profiles;
pub mod quad;
pub mod solvers;
pub mod spectral;
