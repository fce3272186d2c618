//! Envelope (profile) Cholesky factorization for sparse SPD matrices.
//!
//! Row `i` of the factor is stored densely from its first nonzero column `first[i]`
//! to the diagonal. For the row-major vertex ordering of a structured mesh the
//! envelope is the band, so the factor costs `O(n · bw²)`.

use crate::error::{FiberError, Result};
use crate::linalg::SparseMatrix;
use crate::Vector;

#[derive(Debug, Clone)]
pub struct SpdFactorization {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    lower: Vec<f64>,
    matrix: SparseMatrix,
    /// Relative residual bound checked after each solve.
    pub tolerance: f64,
}

impl SpdFactorization {
    pub const DEFAULT_TOLERANCE: f64 = 1e-10;

    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FiberError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let first: Vec<usize> = (0..n)
            .map(|i| {
                matrix
                    .row(i)
                    .0
                    .iter()
                    .copied()
                    .filter(|&j| j <= i)
                    .min()
                    .unwrap_or(i)
            })
            .collect();
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i] + 1);
        }
        let mut lower = vec![0.0; offsets[n]];
        for i in 0..n {
            let (cols, vals) = matrix.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    lower[offsets[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut s = lower[offsets[i] + j - fi];
                let row_i = &lower[offsets[i]..offsets[i + 1]];
                let row_j = &lower[offsets[j]..offsets[j + 1]];
                for k in start..j {
                    s -= row_i[k - fi] * row_j[k - fj];
                }
                if j < i {
                    let d = lower[offsets[j + 1] - 1];
                    lower[offsets[i] + j - fi] = s / d;
                } else {
                    if !(s > 0.0) {
                        return Err(FiberError::NotPositiveDefinite { pivot: i, value: s });
                    }
                    lower[offsets[i + 1] - 1] = s.sqrt();
                }
            }
        }

        Ok(Self {
            n,
            first,
            offsets,
            lower,
            matrix: matrix.clone(),
            tolerance: Self::DEFAULT_TOLERANCE,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn substitute(&self, rhs: &Vector) -> Vector {
        let n = self.n;
        let mut y = rhs.clone();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        // Lᵀ x = y, column-oriented over the stored rows
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        y
    }

    /// Solves `A x = b`, applying one step of iterative refinement if the relative
    /// residual exceeds the tolerance.
    pub fn solve(&self, rhs: &Vector) -> Result<Vector> {
        if rhs.len() != self.n {
            return Err(FiberError::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let bnorm = rhs.norm();
        if bnorm == 0.0 {
            return Ok(Vector::zeros(self.n));
        }
        let mut x = self.substitute(rhs);
        for iteration in 0..3 {
            let r = rhs - self.matrix.mul_vec(&x);
            let rel = r.norm() / bnorm;
            if rel <= self.tolerance {
                return Ok(x);
            }
            if iteration == 2 {
                return Err(FiberError::LinearSolve {
                    iterations: iteration,
                    residual: rel,
                });
            }
            x += self.substitute(&r);
        }
        unreachable!()
    }

    /// `bᵀ A⁻¹ b`, the dual (H⁻¹) squared norm when `A` is the stiffness matrix.
    pub fn inverse_quadratic(&self, rhs: &Vector) -> Result<f64> {
        Ok(rhs.dot(&self.solve(rhs)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> nalgebra::DMatrix<f64> {
        let b = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + nalgebra::DMatrix::identity(n, n) * (n as f64)
    }

    fn to_sparse(a: &nalgebra::DMatrix<f64>) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        SparseMatrix::from_triplets(a.nrows(), a.ncols(), &t)
    }

    #[test]
    fn identity_returns_rhs() {
        let f = SpdFactorization::new(&SparseMatrix::identity(4)).unwrap();
        let b = Vector::from_vec(vec![1.0, -2.0, 3.5, 0.25]);
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(5, &mut rng);
        let b = Vector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let oracle = a.clone().lu().solve(&b).unwrap();
        let x = SpdFactorization::new(&to_sparse(&a))
            .unwrap()
            .solve(&b)
            .unwrap();
        assert!((x - &oracle).norm() <= 1e-10 * oracle.norm());
    }

    #[test]
    fn banded_pattern_with_gaps() {
        // tridiagonal plus a long-range coupling creates an envelope with zeros inside
        let n = 12;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        t.push((0, 9, 0.5));
        t.push((9, 0, 0.5));
        let a = SparseMatrix::from_triplets(n, n, &t);
        let b = Vector::from_fn(n, |i, _| (i as f64).sin());
        let x = SpdFactorization::new(&a).unwrap().solve(&b).unwrap();
        let oracle = a.to_dense().lu().solve(&b).unwrap();
        assert!((x - oracle).norm() < 1e-13);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 1.0),
                (1, 1, 1.0),
                (1, 2, 2.0),
                (2, 1, 2.0),
                (2, 2, 1.0),
            ],
        );
        match SpdFactorization::new(&a) {
            Err(FiberError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn solve_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(8, &mut rng);
        let f = SpdFactorization::new(&to_sparse(&a)).unwrap();
        for _ in 0..10 {
            let r1 = Vector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
            let r2 = Vector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
            let (ca, cb) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lhs = f.solve(&(&r1 * ca + &r2 * cb)).unwrap();
            let rhs = f.solve(&r1).unwrap() * ca + f.solve(&r2).unwrap() * cb;
            assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
