//! Linear algebra: sparse storage, SPD factorization, generalized eigenpairs of
//! `(K, M)` and restarted GMRES for the extended Jacobian.

pub mod eigen;
pub mod krylov;
pub mod sparse;
pub mod spd;

pub use eigen::{smallest_eigenpairs, EigenBasis, EigenOptions};
pub use krylov::{gmres, GmresOptions, GmresReport, LinearOperator};
pub use sparse::SparseMatrix;
pub use spd::SpdFactorization;
