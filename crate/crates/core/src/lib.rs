//! Numerical laboratory for Lipschitz stability of the inverse conductivity
//! problem with conductivities `σ(x) = γ(x) A(x)`, `γ` piecewise constant on a
//! known partition and `A` a known Lipschitz matrix field.
//!
//! Modules, bottom up:
//!
//! * [`geometry`]: layered box partitions, structured tetrahedral meshes,
//!   the flattening map.
//! * [`conductivity`]: the class of admissible conductivities, validation,
//!   extension to the augmented domain, `L∞` distances.
//! * [`kernels`]: Laplace kernel and the explicit two-phase (isotropic and
//!   anisotropic) fundamental solutions for a flat interface.
//! * [`fem`]: P1 assembly, Dirichlet and Green's function solves, energies.
//! * [`dnmap`]: local Dirichlet-to-Neumann maps, the `H^{1/2}` Gram and the
//!   operator norm, `S_U` integrals.
//! * [`stability_calculus`]: `ω_b` weights, the geometric cascade and the `δ_k`
//!   recursion.
//! * [`lab`]: experiment orchestration behind the `eitlab` CLI.

pub mod conductivity;
pub mod dnmap;
mod error;
pub mod fem;
pub mod geometry;
pub mod kernels;
pub mod lab;
pub mod linalg;
pub mod quadrature;
pub mod stability_calculus;

pub use error::{Error, Result};
