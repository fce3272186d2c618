//! Restarted GMRES with right preconditioning. With right preconditioning the
//! Arnoldi residual is the true residual of the original system, so the
//! stopping test is on `‖b - A x‖ / ‖b‖` directly.

use crate::error::{FiberError, Result};
use crate::Vector;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
}

impl LinearOperator for crate::linalg::SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &Vector) -> Vector {
        self.mul_vec(x)
    }
}

#[derive(Debug, Clone)]
pub struct GmresOptions {
    pub tolerance: f64,
    pub restart: usize,
    /// Total iteration cap; `None` means `10·n`.
    pub max_iterations: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            restart: 60,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` with right preconditioner `precond ≈ A⁻¹`, starting from zero.
pub fn gmres<A, P>(
    op: &A,
    precond: P,
    rhs: &Vector,
    options: &GmresOptions,
) -> Result<(Vector, GmresReport)>
where
    A: LinearOperator + ?Sized,
    P: Fn(&Vector) -> Result<Vector>,
{
    let n = op.dim();
    if rhs.len() != n {
        return Err(FiberError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let bnorm = rhs.norm();
    let mut x = Vector::zeros(n);
    if bnorm == 0.0 || n == 0 {
        return Ok((
            x,
            GmresReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let max_iter = options.max_iterations.unwrap_or(10 * n).max(1);
    let m = options.restart.max(1).min(n.max(1));
    let mut total = 0usize;
    let mut r = rhs.clone();
    let mut rel = 1.0;

    while total < max_iter {
        let beta = r.norm();
        rel = beta / bnorm;
        if rel <= options.tolerance {
            break;
        }
        let mut basis: Vec<Vector> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Vector> = Vec::with_capacity(m);
        basis.push(&r / beta);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;

        for j in 0..m {
            let z = precond(&basis[j])?;
            let mut w = op.apply(&z);
            zs.push(z);
            // modified Gram-Schmidt, applied twice
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = w.dot(q);
                    h[i][j] += c;
                    w.axpy(-c, q, 1.0);
                }
            }
            let hn = w.norm();
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c * h[j][j] + s * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            used = j + 1;
            total += 1;
            let est = g[j + 1].abs() / bnorm;
            if est <= options.tolerance * 0.5 || hn <= f64::EPSILON * beta || total >= max_iter {
                break;
            }
            basis.push(w / hn);
        }

        // back substitution on the triangular Hessenberg factor
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (i, z) in zs.iter().enumerate().take(used) {
            x.axpy(y[i], z, 1.0);
        }
        r = rhs - op.apply(&x);
        rel = r.norm() / bnorm;
        if rel <= options.tolerance {
            break;
        }
    }

    if rel <= options.tolerance && rel.is_finite() {
        Ok((
            x,
            GmresReport {
                iterations: total,
                relative_residual: rel,
            },
        ))
    } else {
        Err(FiberError::LinearSolve {
            iterations: total,
            residual: rel,
        })
    }
}
