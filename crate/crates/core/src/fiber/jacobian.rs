use nalgebra::DMatrix;

use crate::decomposition::{Decomposition, Part};
use crate::error::{FiberError, Result};
use crate::linalg::{gmres, GmresOptions, LinearOperator, SparseMatrix};
use crate::Vector;

/// Largest system for which the dense fallback is allowed.
pub const DENSE_FALLBACK_LIMIT: usize = 2000;

/// The extended Jacobian `L z = K z - Q_Y(A (Q_X z))`, where `A` is the mass
/// matrix weighted by `f'(u_h)`.
///
/// On the horizontal space it is the Jacobian of the projected restriction; on
/// the vertical space it is `K` itself. Applied matrix-free: two sparse
/// matvecs plus `O(|J|)` dot products.
pub struct ExtendedJacobian<'a> {
    pub decomposition: &'a Decomposition,
    pub weighted_mass: SparseMatrix,
}

impl<'a> ExtendedJacobian<'a> {
    pub fn new(decomposition: &'a Decomposition, weighted_mass: SparseMatrix) -> Self {
        Self {
            decomposition,
            weighted_mass,
        }
    }

    /// Dense assembly of `L`, for oracles and small-system fallback.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.decomposition;
        let n = self.dim();
        let k = d.stiffness().to_dense();
        let a = self.weighted_mass.to_dense();
        let mut qx = DMatrix::<f64>::identity(n, n);
        let mut qy = DMatrix::<f64>::identity(n, n);
        for (p, mp) in d.psi.iter().zip(&d.mass_psi) {
            qx -= p * mp.transpose();
            qy -= mp * p.transpose();
        }
        k - qy * a * qx
    }

    fn solve_dense(&self, rhs: &Vector) -> Result<Vector> {
        self.to_dense()
            .lu()
            .solve(rhs)
            .ok_or(FiberError::IllConditioned { rcond: 0.0 })
    }

    /// Solves `L x = rhs` by K-preconditioned GMRES; falls back to a dense LU
    /// when GMRES fails on a system of at most [`DENSE_FALLBACK_LIMIT`] unknowns.
    pub fn solve(&self, rhs: &Vector, tolerance: f64) -> Result<Vector> {
        let spd = self.decomposition.spd();
        let options = GmresOptions {
            tolerance,
            ..Default::default()
        };
        match gmres(self, |v: &Vector| spd.solve(v), rhs, &options) {
            Ok((x, report)) => {
                log::trace!(
                    "gmres: {} iterations, residual {:e}",
                    report.iterations,
                    report.relative_residual
                );
                Ok(x)
            }
            Err(err @ FiberError::LinearSolve { .. }) if self.dim() <= DENSE_FALLBACK_LIMIT => {
                log::warn!("{err}; using dense fallback");
                self.solve_dense(rhs)
            }
            Err(err) => Err(err),
        }
    }
}

impl LinearOperator for ExtendedJacobian<'_> {
    fn dim(&self) -> usize {
        self.decomposition.spd().dim()
    }

    fn apply(&self, z: &Vector) -> Vector {
        let d = self.decomposition;
        let qz = d.project_x(z, Part::Horizontal);
        let az = self.weighted_mass.mul_vec(&qz);
        d.stiffness().mul_vec(z) - d.project_y(&az, Part::Horizontal)
    }
}

/// `L x = rhs` with the default tolerance `1e-9`.
pub fn extended_jacobian_solve(op: &ExtendedJacobian<'_>, rhs: &Vector) -> Result<Vector> {
    op.solve(rhs, 1e-9)
}
