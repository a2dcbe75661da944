//! Numerical laboratory for the two-operator Bellman equation
//! `Min{L1 v, L2 v} = 0` on a square in 2D and the two-phase free boundary
//! problem satisfied by `u = v_22`.
//!
//! The crate solves the discrete Dirichlet problem by policy iteration (with a
//! smoothed-operator solver as cross-check), extracts the free boundary
//! `{L1 v = L2 v}`, measures the anisotropic flux condition across it, and
//! runs the regularity estimators (Lipschitz and C^{2,1} seminorms, blow-up
//! classification, cubic expansion fits, dyadic decay checks) against
//! closed-form manufactured solutions.

pub mod error;
pub mod grid;
pub mod operators;
pub mod manufactured;
pub mod solver;
pub mod twophase;
pub mod freeboundary;
pub mod regularity;
pub mod report;

pub use error::{Error, Result};
