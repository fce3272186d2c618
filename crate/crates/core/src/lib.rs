//! Multiple-solution finder for the semilinear Dirichlet problem `-Δu - f(u) = g`
//! on polygonal domains.
//!
//! The solver splits the unknown into a low-dimensional *vertical* part (spanned
//! by the Dirichlet-Laplacian eigenfunctions whose eigenvalues lie in the range
//! of `f'`) and a *horizontal* complement. On each horizontal affine subspace the
//! projected map is a diffeomorphism, so the set of functions whose residual is
//! purely vertical (a *fiber*) is parameterized by its height. Solutions are found
//! by tracing the fiber and inverting the resulting finite-dimensional map.
//!
//! Layout:
//! - [`mesh`]: P1 triangulations and validation
//! - [`fem`]: stiffness, mass, weighted mass and load assembly
//! - [`linalg`]: sparse storage, SPD factorization, eigenpairs, Krylov solves
//! - [`decomposition`]: X = H¹₀ / Y = H⁻¹ projections and heights
//! - [`fiber`]: the discrete map, the extended Jacobian, fiber search and tracing
//! - [`inversion`]: 1-D crossings, planar curve imaging, double points, preimages
//! - [`problems`]: nonlinearities, right-hand sides, shipped example configurations

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod error;
pub mod fem;
pub mod fiber;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod parallel;
pub mod problems;

pub use decomposition::{Decomposition, Part};
pub use error::{FiberError, Result};
pub use fem::FemSystem;
pub use fiber::{FiberPoint, Problem};
pub use linalg::{EigenBasis, SparseMatrix, SpdFactorization};
pub use mesh::Mesh;
pub use problems::{Nonlinearity, ProblemSpec};

/// Interior-node vector type used throughout (primal functions and dual functionals).
pub type Vector = nalgebra::DVector<f64>;
