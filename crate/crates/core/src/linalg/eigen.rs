//! Smallest generalized eigenpairs of `K ψ = λ M ψ` by shift-invert subspace
//! iteration (shift 0) with a Rayleigh–Ritz projection every sweep.

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FiberError, Result};
use crate::linalg::{SparseMatrix, SpdFactorization};
use crate::{parallel, Vector};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Extra block vectors beyond the requested count.
    pub guard_vectors: usize,
    pub max_sweeps: usize,
    /// Target for `‖Kψ - λMψ‖ / ‖Kψ‖`.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            guard_vectors: 3,
            max_sweeps: 200,
            tolerance: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// The `k` smallest eigenpairs, M-orthonormal, eigenvalues nondecreasing.
#[derive(Debug, Clone, Serialize)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vector>,
    pub residuals: Vec<f64>,
    pub sweeps: usize,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn relative_residual(k: &SparseMatrix, m: &SparseMatrix, x: &Vector, lambda: f64) -> f64 {
    let kx = k.mul_vec(x);
    let r = &kx - m.mul_vec(x) * lambda;
    r.norm() / kx.norm()
}

/// Rayleigh–Ritz on the block `y`: returns Ritz values (ascending) and the
/// M-orthonormal Ritz vectors.
fn rayleigh_ritz(
    k: &SparseMatrix,
    m: &SparseMatrix,
    y: &[Vector],
) -> Result<(Vec<f64>, Vec<Vector>)> {
    let p = y.len();
    let ky: Vec<Vector> = parallel::map_slice(y, |v| k.mul_vec(v));
    let my: Vec<Vector> = parallel::map_slice(y, |v| m.mul_vec(v));
    let mut kr = DMatrix::zeros(p, p);
    let mut mr = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let a = 0.5 * (y[i].dot(&ky[j]) + y[j].dot(&ky[i]));
            let b = 0.5 * (y[i].dot(&my[j]) + y[j].dot(&my[i]));
            kr[(i, j)] = a;
            kr[(j, i)] = a;
            mr[(i, j)] = b;
            mr[(j, i)] = b;
        }
    }
    let chol = mr.cholesky().ok_or(FiberError::NotPositiveDefinite {
        pivot: 0,
        value: f64::NAN,
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(FiberError::IllConditioned { rcond: 0.0 })?;
    let mut c = &l_inv * &kr * l_inv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coeffs = l_inv.transpose() * &eig.eigenvectors;

    let n = y[0].len();
    let mut values = Vec::with_capacity(p);
    let mut vectors = Vec::with_capacity(p);
    for &col in &order {
        let mut x = Vector::zeros(n);
        for (i, yi) in y.iter().enumerate() {
            x.axpy(coeffs[(i, col)], yi, 1.0);
        }
        values.push(eig.eigenvalues[col]);
        vectors.push(x);
    }
    Ok((values, vectors))
}

/// Orients eigenvectors deterministically: `ψ₁` has positive mass-weighted sum,
/// and every other `ψ_j` has a positive first significant entry
/// (`|ψ_i| > 10⁻³·max|ψ|`).
fn orient(m: &SparseMatrix, vectors: &mut [Vector]) {
    for (j, v) in vectors.iter_mut().enumerate() {
        let flip = if j == 0 {
            m.mul_vec(v).sum() < 0.0
        } else {
            let cutoff = 1e-3 * v.amax();
            v.iter()
                .find(|x| x.abs() > cutoff)
                .is_some_and(|&x| x < 0.0)
        };
        if flip {
            v.neg_mut();
        }
    }
}

pub fn smallest_eigenpairs(
    stiffness: &SpdFactorization,
    mass: &SparseMatrix,
    count: usize,
    options: &EigenOptions,
) -> Result<EigenBasis> {
    let k = stiffness.matrix();
    let n = k.nrows();
    if count == 0 || count > n {
        return Err(FiberError::InvalidParameter(format!(
            "requested {count} eigenpairs of a {n}-dimensional problem"
        )));
    }
    let p = (count + options.guard_vectors).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut block: Vec<Vector> = (0..p)
        .map(|_| Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();

    let mut worst = f64::INFINITY;
    for sweep in 1..=options.max_sweeps {
        let solved: Vec<Result<Vector>> =
            parallel::map_slice(&block, |x| stiffness.solve(&mass.mul_vec(x)));
        let y = solved.into_iter().collect::<Result<Vec<_>>>()?;
        let (values, vectors) = rayleigh_ritz(k, mass, &y)?;
        let residuals: Vec<f64> = (0..count)
            .map(|j| relative_residual(k, mass, &vectors[j], values[j]))
            .collect();
        worst = residuals.iter().copied().fold(0.0, f64::max);
        block = vectors;
        debug!("eigen sweep {sweep}: worst residual {worst:e}");
        if worst <= options.tolerance || p == n {
            let mut eigenvectors: Vec<Vector> = block.into_iter().take(count).collect();
            for v in eigenvectors.iter_mut() {
                let norm = mass.bilinear(v, v).sqrt();
                *v /= norm;
            }
            orient(mass, &mut eigenvectors);
            let eigenvalues: Vec<f64> = values.into_iter().take(count).collect();
            for w in eigenvalues.windows(2) {
                if w[1] - w[0] < 1e-6 {
                    warn!("clustered eigenvalues {} and {} (gap < 1e-6)", w[0], w[1]);
                }
            }
            return Ok(EigenBasis {
                eigenvalues,
                eigenvectors,
                residuals,
                sweeps: sweep,
            });
        }
    }
    Err(FiberError::EigenNotConverged {
        sweeps: options.max_sweeps,
        residual: worst,
    })
}
