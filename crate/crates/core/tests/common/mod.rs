#![allow(dead_code)]

use fiberfem::fem::FemSystem;
use fiberfem::fiber::Problem;
use fiberfem::problems::{MeshSpec, ProblemSpec};
use fiberfem::{SparseMatrix, Vector};
use nalgebra::{DMatrix, DVector};

pub fn on_mesh(mut spec: ProblemSpec, nx: usize) -> ProblemSpec {
    spec.mesh = MeshSpec {
        nx,
        ny: 2 * nx,
        width: 1.0,
        height: 2.0,
    };
    spec
}

pub fn build(spec: &ProblemSpec) -> Problem {
    Problem::build(spec).expect("problem builds")
}

pub fn x_distance(problem: &Problem, a: &Vector, b: &Vector) -> f64 {
    problem.decomposition.x_norm(&(a - b))
}

/// Generalized eigenvalues of `(K, M)` by a dense Cholesky reduction, ascending.
pub fn dense_generalized_eigenvalues(k: &SparseMatrix, m: &SparseMatrix) -> Vec<f64> {
    let l = m.to_dense().cholesky().expect("M is SPD").l();
    let linv = l.clone().try_inverse().expect("invertible");
    let c = &linv * k.to_dense() * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn dense_solve(a: DMatrix<f64>, b: &Vector) -> Vector {
    a.lu().solve(b).expect("nonsingular")
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Least-squares affine fit of each column of `ys` against `ts`; returns the
/// largest absolute deviation from the fitted lines.
pub fn collinearity_residual(ts: &[f64], ys: &[Vec<f64>]) -> f64 {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let d = ys[0].len();
    let mut worst = 0.0f64;
    for j in 0..d {
        let ym = ys.iter().map(|y| y[j]).sum::<f64>() / n;
        let sty: f64 = ts.iter().zip(ys).map(|(t, y)| (t - tm) * (y[j] - ym)).sum();
        let slope = sty / stt;
        for (t, y) in ts.iter().zip(ys) {
            worst = worst.max((y[j] - (ym + slope * (t - tm))).abs());
        }
    }
    worst
}

pub fn slope_sign_changes(values: &[f64]) -> usize {
    let slopes: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|s| *s != 0.0)
        .collect();
    slopes.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

// degree-5 rule on triangles, barycentric points with weights summing to 1
const A1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.101_286_507_323_456_3;
const W1: f64 = 0.132_394_152_788_506_2;
const W2: f64 = 0.125_939_180_544_827_2;

pub fn degree5_rule() -> Vec<([f64; 3], f64)> {
    let mut rule = vec![([1.0 / 3.0; 3], 0.225)];
    for (a, w) in [(A1, W1), (A2, W2)] {
        let b = 1.0 - 2.0 * a;
        rule.push(([a, a, b], w));
        rule.push(([a, b, a], w));
        rule.push(([b, a, a], w));
    }
    rule
}

/// `‖u_h - exact‖_{L²}` with the degree-5 rule.
pub fn l2_error_against(fem: &FemSystem, u: &Vector, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mesh = &fem.mesh;
    let rule = degree5_rule();
    let nodal = |v: usize| mesh.interior_index(v).map_or(0.0, |i| u[i]);
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let c = mesh.corners(t);
        let area = mesh.signed_area(t).abs();
        for (bary, w) in &rule {
            let x = bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0];
            let y = bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1];
            let uh = bary[0] * nodal(tri[0]) + bary[1] * nodal(tri[1]) + bary[2] * nodal(tri[2]);
            sum += w * area * (uh - exact(x, y)).powi(2);
        }
    }
    sum.sqrt()
}
