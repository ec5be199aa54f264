//! Distance from a square matrix polynomial `P(λ) = Σ λ^i A_i` to the nearest
//! matrix polynomial that has an elementary divisor `(λ - λ0)^j` with `j ≥ r + 1`.
//!
//! The crate is organised around the structured matrices that characterise the
//! problem:
//!
//! * [`polyalg`] builds the Taylor-coefficient rows, the `H`/`M` change of basis,
//!   the scaled block Toeplitz matrix `T_γ(P, λ0)` and the selector `E`.
//! * [`certify`] turns rank deficiency of `T` into multiplicity certificates and
//!   cross-checks them against a companion-pencil eigenvalue solver.
//! * [`bounds`] evaluates the singular-value lower bounds and the constructive
//!   upper bound, each with an outer search over its scaling parameters.
//! * [`distopt`] minimises `‖H X (M X)†‖` over chain matrices `X` with BFGS.
//! * [`mulink`] materialises the generalized μ-value matrices and checks the
//!   nullity conditions on a supplied perturbation.
//! * [`pipeline`] and [`tables`] glue everything into auditable reports.

pub mod bounds;
pub mod certify;
pub mod distopt;
mod error;
pub mod io;
pub mod linalg;
pub mod mulink;
pub mod optim;
pub mod pipeline;
pub mod polyalg;
pub mod tables;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use polyalg::{GammaVector, MatrixPolynomial, NormKind};
