mod common;

use common::*;
use fiberfem::fiber::{
    extended_jacobian_solve, lower_bound_estimate, trace_fiber, ExtendedJacobian, Problem,
};
use fiberfem::problems::{
    example_two_solutions, linear_example, reference_lambda1, Nonlinearity, RhsSpec,
};
use fiberfem::Vector;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear(c: f64, nx: usize) -> Problem {
    build(&linear_example(c, nx))
}

fn example1(nx: usize) -> Problem {
    build(&on_mesh(example_two_solutions(), nx))
}

fn constant_jacobian(p: &Problem, c: f64) -> ExtendedJacobian<'_> {
    let weights = vec![c; p.fem.quadrature.len()];
    ExtendedJacobian::new(&p.decomposition, p.fem.weighted_mass(&weights).unwrap())
}

#[test]
fn evaluate_f_linear_cases() {
    let mut spec = linear_example(16.0, 8);
    spec.nonlinearity = Nonlinearity::Linear { c: 0.0 };
    spec.interval = [-1.0, 16.0];
    let p = build(&spec);
    let u = p.decomposition.spd().solve(&p.rhs).unwrap();
    let fu = p.evaluate_f(&u).unwrap();
    assert!((&fu - &p.rhs).norm() <= 1e-9 * p.rhs.norm());
    assert_eq!(p.evaluate_f(&Vector::zeros(p.dim())).unwrap().norm(), 0.0);
}

#[test]
fn evaluate_f_nearly_annihilates_ground_state_at_lambda1() {
    let mut spec = linear_example(reference_lambda1(), 16);
    spec.interval[1] = 15.0;
    let p = build(&spec);
    let phi = p.decomposition.phi_x(0);
    let lam = p.basis.eigenvalues[0];
    let mpsi = p.fem.mass.mul_vec(&p.basis.eigenvectors[0]);
    for eps in [1e-3, 1.0, 10.0] {
        let fu = p.evaluate_f(&(&phi * eps)).unwrap();
        let ratio = p.decomposition.y_norm(&fu).unwrap() / eps;
        let predicted =
            (lam - reference_lambda1()).abs() / lam.sqrt() * p.decomposition.y_norm(&mpsi).unwrap();
        assert!(
            (ratio - predicted).abs() <= 1e-8 * (1.0 + predicted),
            "{ratio} vs {predicted}"
        );
        assert!(ratio < 0.01);
    }
}

#[test]
fn eigen_action_for_constant_derivative() {
    for nx in [8, 16] {
        let c = 16.0;
        let p = linear(c, nx);
        assert_eq!(p.decomposition.index_set, vec![0]);
        let l = constant_jacobian(&p, c);
        for (j, psi) in p.basis.eigenvectors.iter().enumerate() {
            let lam = p.basis.eigenvalues[j];
            let expected = if j == 0 { lam } else { lam - c };
            let mpsi = p.fem.mass.mul_vec(psi);
            let diff = fiberfem::linalg::LinearOperator::apply(&l, psi) - mpsi * expected;
            let err = p.decomposition.y_norm(&diff).unwrap();
            assert!(err <= 1e-8, "nx {nx} j {j}: {err}");
        }
    }
}

#[test]
fn extended_jacobian_solve_examples() {
    let c = 16.0;
    let p = linear(c, 8);
    let zero = constant_jacobian(&p, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rhs = Vector::from_fn(p.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let z = extended_jacobian_solve(&zero, &rhs).unwrap();
    let oracle = p.decomposition.spd().solve(&rhs).unwrap();
    assert!((&z - &oracle).norm() <= 1e-8 * oracle.norm());

    let l = constant_jacobian(&p, c);
    for (j, psi) in p.basis.eigenvectors.iter().enumerate() {
        let lam = p.basis.eigenvalues[j];
        let rhs = p.fem.mass.mul_vec(psi);
        let z = extended_jacobian_solve(&l, &rhs).unwrap();
        let expected = if j == 0 { psi / lam } else { psi / (lam - c) };
        assert!((&z - &expected).norm() <= 1e-7 * expected.norm(), "j {j}");
        let res = fiberfem::linalg::LinearOperator::apply(&l, &z) - &rhs;
        assert!(res.norm() <= 1e-9 * rhs.norm());
    }
}

#[test]
fn matrix_free_and_dense_jacobian_agree() {
    let p = example1(8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = Vector::from_fn(p.dim(), |_, _| rng.gen_range(-20.0..20.0));
    let l = p.extended_jacobian(&u).unwrap();
    let dense = l.to_dense();
    let x = Vector::from_fn(p.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let y = fiberfem::linalg::LinearOperator::apply(&l, &x);
    assert!((&dense * &x - &y).norm() <= 1e-12 * y.norm());
    assert!((&dense - dense.transpose()).amax() <= 1e-12 * dense.amax());
}

/// Oracle for `f(u) = c·u`: `(K - cM)u - s·Mψ₁ = g` with `√λ₁ ψ₁ᵀMu = v`.
fn linear_fiber_oracle(p: &Problem, c: f64, v: f64) -> Vector {
    let n = p.dim();
    let a = p.fem.stiffness.to_dense() - p.fem.mass.to_dense() * c;
    let mpsi = p.fem.mass.mul_vec(&p.basis.eigenvectors[0]);
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(&a);
    big.view_mut((0, n), (n, 1)).copy_from(&(-&mpsi));
    big.view_mut((n, 0), (1, n)).copy_from(&mpsi.transpose());
    let mut rhs = Vector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&p.rhs);
    rhs[n] = v / p.basis.eigenvalues[0].sqrt();
    dense_solve(big, &rhs).rows(0, n).into_owned()
}

#[test]
fn linear_fiber_point_matches_dense_oracle() {
    let c = 16.0;
    let p = linear(c, 16);
    assert!(p.dim() <= 500);
    for v in [0.0, 7.5, -30.0] {
        let point = p.find_fiber_point(&[v], &Vector::zeros(p.dim())).unwrap();
        let oracle = linear_fiber_oracle(&p, c, v);
        assert!(x_distance(&p, &point.u, &oracle) <= 1e-8, "v {v}");
        assert!((point.heights[0] - v).abs() <= 1e-12 * (1.0 + v.abs()));
        assert!(point.residual_h <= p.tol.fiber);
    }
}

#[test]
fn converged_start_is_returned_unchanged() {
    let p = example1(8);
    let first = p.find_fiber_point(&[3.0], &Vector::zeros(p.dim())).unwrap();
    let (again, log) = p.find_fiber_point_logged(&[3.0], &first.u).unwrap();
    assert_eq!(again.u, first.u);
    assert_eq!(log.newton_iterations, 0);
}

#[test]
fn example1_fiber_point_from_zero() {
    let p = example1(16);
    let point = p.find_fiber_point(&[0.0], &Vector::zeros(p.dim())).unwrap();
    assert!(point.residual_h <= 1e-8);
    assert!(point.heights[0].abs() <= 1e-12);
}

#[test]
fn newton_iterates_stay_on_the_affine_subspace() {
    let p = example1(8);
    for v in [0.0, 25.0, -40.0] {
        let (_, log) = p
            .find_fiber_point_logged(&[v], &Vector::zeros(p.dim()))
            .unwrap();
        assert!(!log.records.is_empty());
        for r in &log.records {
            assert!((r.monitor[0] - v).abs() <= 1e-10, "v {v}: {:?}", r.monitor);
        }
    }
}

#[test]
fn fiber_point_is_unique_on_each_affine_subspace() {
    for nx in [8, 16] {
        let p = example1(nx);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = -12.0;
        let mut points = Vec::new();
        for s in 0..5 {
            let mut u0 = Vector::zeros(p.dim());
            if s > 0 {
                let scale = 10.0 * s as f64;
                u0 = Vector::from_fn(p.dim(), |_, _| rng.gen_range(-scale..scale));
                u0 += p.decomposition.phi_x(0) * rng.gen_range(-50.0..50.0);
            }
            points.push(p.find_fiber_point(&[v], &u0).unwrap());
        }
        for q in &points[1..] {
            let d = x_distance(&p, &q.u, &points[0].u);
            assert!(d <= 1e-6, "nx {nx}: {d}");
        }
    }
}

#[test]
fn final_newton_steps_contract_quadratically() {
    let p = example1(16);
    for v in [0.0, -20.0] {
        let (_, log) = p
            .find_fiber_point_logged(&[v], &Vector::zeros(p.dim()))
            .unwrap();
        let r = &log.final_residuals;
        assert!(r.len() >= 3, "{r:?}");
        let n = r.len();
        let slope = (r[n - 1] / r[n - 2]).ln() / (r[n - 2] / r[n - 3]).ln();
        assert!(slope >= 1.7, "residuals {r:?}, slope {slope}");
    }
}

#[test]
fn zero_length_trace_is_a_single_fiber_point() {
    let p = example1(8);
    let u0 = Vector::zeros(p.dim());
    let trace = trace_fiber(&p, [5.0, 5.0], 10, &[1.0], &u0).unwrap();
    assert_eq!(trace.samples.len(), 1);
    let direct = p.find_fiber_point(&[5.0], &u0).unwrap();
    assert_eq!(trace.samples[0].point.u, direct.u);
}

#[test]
fn linear_trace_is_affine() {
    let p = linear(16.0, 16);
    let trace = trace_fiber(&p, [-20.0, 20.0], 8, &[1.0], &p.start).unwrap();
    assert!(trace.is_complete());
    let ys: Vec<Vec<f64>> = trace
        .samples
        .iter()
        .map(|s| s.point.f_heights.clone())
        .collect();
    assert!(collinearity_residual(&trace.ts(), &ys) <= 1e-8);
}

#[test]
fn example1_trace_has_one_turning_point() {
    let p = example1(16);
    let trace = trace_fiber(&p, [-60.0, 60.0], 48, &[1.0], &p.start).unwrap();
    assert!(trace.is_complete());
    let ts = trace.ts();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    let b: Vec<f64> = trace.samples.iter().map(|s| s.point.f_heights[0]).collect();
    assert_eq!(slope_sign_changes(&b), 1);
    for s in &trace.samples {
        assert!(s.point.residual_h <= p.tol.fiber);
        assert!((s.point.heights[0] - s.t).abs() <= 1e-12 * (1.0 + s.t.abs()));
    }
    assert!(
        lower_bound_estimate(
            &p,
            &trace
                .samples
                .iter()
                .map(|s| s.point.clone())
                .collect::<Vec<_>>()
        )
        .unwrap()
            > 0.0
    );
}

#[test]
fn lower_bound_matches_dense_spectrum_for_constant_derivative() {
    let c = 16.0;
    let p = linear(c, 8);
    let point = p.find_fiber_point(&[0.0], &p.start).unwrap();
    let estimate = lower_bound_estimate(&p, &[point]).unwrap();
    let spectrum = dense_generalized_eigenvalues(&p.fem.stiffness, &p.fem.mass);
    let expected = spectrum[1..]
        .iter()
        .map(|l| (1.0 - c / l).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(
        (estimate - expected).abs() <= 1e-6 * expected,
        "{estimate} vs {expected}"
    );
    assert!(lower_bound_estimate(&p, &[]).is_err());
}

#[test]
fn custom_rhs_vector_is_read_as_a_load() {
    let dir = tempfile::tempdir().unwrap();
    let reference = linear(16.0, 8);
    let path = dir.path().join("g.csv");
    fiberfem::io::write_vector_csv(&path, &reference.rhs).unwrap();
    let mut spec = linear_example(16.0, 8);
    spec.rhs = RhsSpec::CustomCsv {
        path: path.to_string_lossy().into_owned(),
    };
    let p = build(&spec);
    assert_eq!(p.rhs, reference.rhs);
}
