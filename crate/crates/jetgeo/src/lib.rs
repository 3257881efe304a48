//! Jet-space differential geometry of first-order autonomous ODE systems.
//!
//! Given a vector field `X = (X^i(x))` on `R^n`, supplied as symbolic
//! expressions, this crate computes the geometric objects attached to the
//! first-order system `dx^i/dt = X^i(x)` when it is recast as a least-squares
//! variational problem on the 1-jet bundle of curves `t -> x(t)`:
//!
//! * the canonical nonlinear connection `N = -1/2 (J - J^T)`, where `J` is the
//!   Jacobian matrix of the field,
//! * the torsion tensor `R[i][j][k] = dN_ij/dx^k`,
//! * the electromagnetic 2-form coefficients `F = -N` together with the cyclic
//!   Maxwell residual,
//! * the Yang-Mills energy density `EYM(x) = 1/2 Tr(F F^T)`,
//! * the second-order Euler-Lagrange prolongation of the flow, and
//! * constant-energy level sets of `EYM` (plane curves for `n = 2`, triangle
//!   meshes for `n = 3`).
//!
//! The [`riemann`] module carries the same construction over a general
//! Riemannian metric (Christoffel symbols, covariant derivatives, the
//! deformation tensor and the induced second-order dynamics); the jet-space
//! pipeline in [`geometry`] is its Euclidean specialization.
//!
//! Two nonlinear economic flows ship as built-in fixtures in [`models`]: the
//! Kaldor business-cycle system in `(Y, K)` and the Tobin-Benhabib-Miyao
//! monetary-growth system in `(k, m, q)`. Both come with independent
//! closed-form implementations of their connection, torsion and energy,
//! used to cross-validate the generic pipeline.
//!
//! Everything is immutable after construction and safe to evaluate from many
//! threads; grid sampling in [`levelset`] is parallelized.

pub mod dynamics;
pub mod expr;
pub mod geometry;
pub mod levelset;
pub mod linalg;
pub mod models;
pub mod riemann;

pub use expr::{Env, Expr};
pub use geometry::{GeometryReport, JetSample, VectorField};
pub use linalg::{SquareMatrix, Tensor3};
