//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use fiberfem::decomposition::Part;
use fiberfem::fem::FemSystem;
use fiberfem::fiber::continuation::{
    continuation_solve, plain_newton, ContinuationOptions, HomotopySystem,
};
use fiberfem::fiber::{trace_fiber, ExtendedJacobian, Problem};
use fiberfem::inversion::{double_point_solutions, solve_1d, Solution};
use fiberfem::linalg::{smallest_eigenpairs, EigenOptions, LinearOperator};
use fiberfem::mesh::uniform_rectangle_mesh;
use fiberfem::problems::{
    example_four_solutions, example_three_solutions, example_two_solutions, linear_example,
    rectangle_eigenvalue, ProblemSpec,
};
use fiberfem::{Result, SpdFactorization, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA1_RANGE: [f64; 2] = [12.337, 12.40];
const LAMBDA2_RANGE: [f64; 2] = [19.739, 19.84];
const H_RATIO_RANGE: [f64; 2] = [3.4, 4.6];
const SOLUTION_RESIDUAL: f64 = 1e-6;
const EXAMPLE1_SEPARATION: f64 = 0.5;
const EXAMPLE3_SEPARATION: f64 = 0.1;
const PROJECTION_TOL: f64 = 1e-9;
const EIGEN_ACTION_TOL: f64 = 1e-8;
const UNIQUENESS_TOL: f64 = 1e-6;
const CONTRACTION_SLOPE: f64 = 1.7;
const LINEAR_ORACLE_TOL: f64 = 1e-8;
const LINEAR_ORACLE_MAX_DIM: usize = 500;
const EIGEN_BUDGET: Duration = Duration::from_secs(60);
const EXAMPLE1_BUDGET: Duration = Duration::from_secs(120);
const EXAMPLE3_BUDGET: Duration = Duration::from_secs(600);
const PROPERTY_BUDGET: Duration = Duration::from_secs(60);

type Check = fn() -> Result<Outcome>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn in_range(x: f64, r: [f64; 2]) -> bool {
    x >= r[0] && x <= r[1]
}

fn eigenvalues(n: usize) -> Result<Vec<f64>> {
    let fem = FemSystem::new(uniform_rectangle_mesh(1.0, 2.0, n, 2 * n)?)?;
    let spd = SpdFactorization::new(&fem.stiffness)?;
    Ok(smallest_eigenpairs(&spd, &fem.mass, 3, &EigenOptions::default())?.eigenvalues)
}

fn criterion_eigenvalues() -> Result<Outcome> {
    let start = Instant::now();
    let fine = eigenvalues(64)?;
    let elapsed = start.elapsed();
    let coarse = eigenvalues(32)?;
    let exact = [
        rectangle_eigenvalue(1.0, 2.0, 1, 1),
        rectangle_eigenvalue(1.0, 2.0, 1, 2),
    ];
    let ratios: Vec<f64> = (0..2)
        .map(|j| (coarse[j] - exact[j]) / (fine[j] - exact[j]))
        .collect();
    let passed = in_range(fine[0], LAMBDA1_RANGE)
        && in_range(fine[1], LAMBDA2_RANGE)
        && ratios.iter().all(|r| in_range(*r, H_RATIO_RANGE))
        && elapsed < EIGEN_BUDGET;
    outcome(
        passed,
        format!(
            "λ1 = {:.6}, λ2 = {:.6} at 64x128; h-ratios {:.3}, {:.3}; {:.1?}",
            fine[0], fine[1], ratios[0], ratios[1], elapsed
        ),
    )
}

fn one_dimensional_solutions(spec: &ProblemSpec) -> Result<(Problem, Vec<Solution>, usize)> {
    let problem = Problem::build(spec)?;
    let t = spec.trace.clone().expect("trace window");
    let trace = trace_fiber(&problem, [t.tmin, t.tmax], t.steps, &[1.0], &problem.start)?;
    if let Some((t, e)) = &trace.failure {
        return Err(fiberfem::FiberError::InvalidParameter(format!(
            "trace failed at t = {t}: {e}"
        )));
    }
    let target = problem.decomposition.heights_y(&problem.rhs)[0];
    let found = solve_1d(&problem, &trace, target)?;
    Ok((problem, found.solutions, found.grazing.len()))
}

fn pairwise_min_distance(problem: &Problem, solutions: &[&Solution]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            min = min.min(x_distance(problem, &solutions[i].u, &solutions[j].u));
        }
    }
    min
}

fn max_residual<'a>(solutions: impl IntoIterator<Item = &'a Solution>) -> f64 {
    solutions
        .into_iter()
        .map(|s| s.residual)
        .fold(0.0, f64::max)
}

fn criterion_example1() -> Result<Outcome> {
    let start = Instant::now();
    let (problem, solutions, grazing) = one_dimensional_solutions(&example_two_solutions())?;
    let elapsed = start.elapsed();
    let refs: Vec<&Solution> = solutions.iter().collect();
    let residual = max_residual(&solutions);
    let separation = pairwise_min_distance(&problem, &refs);
    let passed = solutions.len() == 2
        && residual <= SOLUTION_RESIDUAL
        && separation > EXAMPLE1_SEPARATION
        && elapsed < EXAMPLE1_BUDGET;
    outcome(
        passed,
        format!(
            "{} solutions ({grazing} grazing), max residual {residual:.2e}, X-distance {separation:.4}; {elapsed:.1?}",
            solutions.len()
        ),
    )
}

fn criterion_example2() -> Result<Outcome> {
    let start = Instant::now();
    let (_, solutions, grazing) = one_dimensional_solutions(&example_three_solutions())?;
    let residual = max_residual(&solutions);
    let heights: Vec<String> = solutions
        .iter()
        .map(|s| format!("{:.3}", s.height[0]))
        .collect();
    outcome(
        solutions.len() == 3 && residual <= SOLUTION_RESIDUAL,
        format!(
            "{} solutions at heights [{}] ({grazing} grazing), max residual {residual:.2e}; {:.1?}",
            solutions.len(),
            heights.join(", "),
            start.elapsed()
        ),
    )
}

fn criterion_example3() -> Result<Outcome> {
    let start = Instant::now();
    let spec = example_four_solutions();
    let problem = Problem::build(&spec)?;
    let report = double_point_solutions(
        &problem,
        spec.path2d.as_ref().expect("path2d"),
        &problem.start,
    )?;
    let elapsed = start.elapsed();
    let solutions: Vec<&Solution> = report.solutions.iter().map(|(_, s)| s).collect();
    let residual = max_residual(solutions.iter().copied());
    let separation = pairwise_min_distance(&problem, &solutions);
    let labels: Vec<&str> = report.solutions.iter().map(|(l, _)| l.as_str()).collect();
    let passed = !report.intersections.is_empty()
        && solutions.len() == 4
        && residual <= SOLUTION_RESIDUAL
        && separation > EXAMPLE3_SEPARATION
        && elapsed < EXAMPLE3_BUDGET;
    outcome(
        passed,
        format!(
            "{} double point(s), Z = ({:.4}, {:.4}), solutions {labels:?}, max residual {residual:.2e}, \
             min X-distance {separation:.4}; {elapsed:.1?}",
            report.intersections.len(),
            report.z[0],
            report.z[1]
        ),
    )
}

struct Arctan;

impl HomotopySystem for Arctan {
    fn residual(&self, u: &Vector) -> Result<Vector> {
        Ok(u.map(f64::atan))
    }
    fn norm(&self, r: &Vector) -> Result<f64> {
        Ok(r.norm())
    }
    fn correction(&self, u: &Vector, r: &Vector) -> Result<Vector> {
        Ok(Vector::from_fn(u.len(), |i, _| -r[i] * (1.0 + u[i] * u[i])))
    }
}

fn projection_defect(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = &problem.decomposition;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let u = Vector::from_fn(problem.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let scale = d.x_norm(&u);
        let pu = d.project_x(&u, Part::Vertical);
        let qu = d.project_x(&u, Part::Horizontal);
        worst = worst
            .max(d.x_norm(&(d.project_x(&pu, Part::Vertical) - &pu)) / scale)
            .max(d.x_norm(&(&pu + &qu - &u)) / scale)
            .max(d.x_inner(&pu, &qu).abs() / (scale * scale));

        let r = Vector::from_fn(problem.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let scale = d.y_norm(&r)?;
        let pr = d.project_y(&r, Part::Vertical);
        let qr = d.project_y(&r, Part::Horizontal);
        worst = worst
            .max(d.y_norm(&(d.project_y(&pr, Part::Vertical) - &pr))? / scale)
            .max(d.y_norm(&(&pr + &qr - &r))? / scale)
            .max(d.y_inner(&pr, &qr)?.abs() / (scale * scale));
    }
    Ok(worst)
}

fn eigen_action_defect(nx: usize) -> Result<f64> {
    let c = 16.0;
    let problem = Problem::build(&linear_example(c, nx))?;
    let weights = vec![c; problem.fem.quadrature.len()];
    let l = ExtendedJacobian::new(&problem.decomposition, problem.fem.weighted_mass(&weights)?);
    let mut worst = 0.0f64;
    for (j, psi) in problem.basis.eigenvectors.iter().enumerate() {
        let lam = problem.basis.eigenvalues[j];
        let factor = if problem.decomposition.index_set.contains(&j) {
            lam
        } else {
            lam - c
        };
        let diff = l.apply(psi) - problem.fem.mass.mul_vec(psi) * factor;
        worst = worst.max(problem.decomposition.y_norm(&diff)?);
    }
    Ok(worst)
}

fn uniqueness_spread(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<f64> {
    let v = -12.0;
    let first = problem.find_fiber_point(&[v], &Vector::zeros(problem.dim()))?;
    let mut spread = 0.0f64;
    for s in 1..5 {
        let scale = 10.0 * s as f64;
        let mut u0 = Vector::from_fn(problem.dim(), |_, _| rng.gen_range(-scale..scale));
        u0 += problem.decomposition.phi_x(0) * rng.gen_range(-50.0..50.0);
        let p = problem.find_fiber_point(&[v], &u0)?;
        spread = spread.max(x_distance(problem, &p.u, &first.u));
    }
    Ok(spread)
}

fn contraction_slope(problem: &Problem) -> Result<f64> {
    let (_, log) = problem.find_fiber_point_logged(&[0.0], &Vector::zeros(problem.dim()))?;
    let r = &log.final_residuals;
    if r.len() < 3 {
        return Ok(f64::NAN);
    }
    let n = r.len();
    Ok((r[n - 1] / r[n - 2]).ln() / (r[n - 2] / r[n - 3]).ln())
}

fn manufactured_ratio() -> Result<f64> {
    let exact = |x: f64, y: f64| (PI * x).sin() * (0.5 * PI * y).sin();
    let mut errors = Vec::new();
    for n in [8, 16] {
        let fem = FemSystem::new(uniform_rectangle_mesh(1.0, 2.0, n, 2 * n)?)?;
        let load = fem.load(move |x, y| 1.25 * PI * PI * exact(x, y))?;
        let u = SpdFactorization::new(&fem.stiffness)?.solve(&load)?;
        errors.push(l2_error_against(&fem, &u, exact));
    }
    Ok(errors[0] / errors[1])
}

fn criterion_properties() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut projection = 0.0f64;
    let mut action = 0.0f64;
    let mut spread = 0.0f64;
    let mut slope = f64::INFINITY;
    for nx in [8, 16] {
        let example1 = Problem::build(&on_mesh(example_two_solutions(), nx))?;
        projection = projection.max(projection_defect(&example1, &mut rng)?);
        action = action.max(eigen_action_defect(nx)?);
        spread = spread.max(uniqueness_spread(&example1, &mut rng)?);
        slope = slope.min(contraction_slope(&example1)?);
    }
    let ratio = manufactured_ratio()?;
    let x0 = Vector::from_element(1, 10.0);
    let opts = ContinuationOptions::default();
    let plain_fails = plain_newton(&Arctan, &x0, &opts).is_err();
    let continued = continuation_solve(&Arctan, &x0, &opts).is_ok_and(|(x, _)| x[0].abs() <= 1e-10);
    let elapsed = start.elapsed();
    let passed = projection <= PROJECTION_TOL
        && action <= EIGEN_ACTION_TOL
        && spread <= UNIQUENESS_TOL
        && in_range(ratio, H_RATIO_RANGE)
        && slope >= CONTRACTION_SLOPE
        && plain_fails
        && continued
        && elapsed < PROPERTY_BUDGET;
    outcome(
        passed,
        format!(
            "projections {projection:.1e}, L eigen-action {action:.1e}, fiber spread {spread:.1e}, \
             L² ratio {ratio:.3}, Newton slope {slope:.2}, arctan plain fails {plain_fails} / continuation {continued}; \
             {elapsed:.1?}"
        ),
    )
}

fn criterion_linear_oracle() -> Result<Outcome> {
    let c = 16.0;
    let spec = linear_example(c, 16);
    let (problem, solutions, _) = one_dimensional_solutions(&spec)?;
    let dim = problem.dim();
    let a = problem.fem.stiffness.to_dense() - problem.fem.mass.to_dense() * c;
    let oracle = dense_solve(a, &problem.rhs);
    let error = solutions
        .first()
        .map_or(f64::INFINITY, |s| x_distance(&problem, &s.u, &oracle));
    outcome(
        solutions.len() == 1 && error <= LINEAR_ORACLE_TOL && dim <= LINEAR_ORACLE_MAX_DIM,
        format!(
            "{} solution(s), X-distance to dense solve {error:.2e}, n = {dim}",
            solutions.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 6] = [
        ("1 eigenvalues", criterion_eigenvalues),
        ("2 example 1: two solutions", criterion_example1),
        ("3 example 2: three solutions", criterion_example2),
        (
            "4 example 3: double point, four solutions",
            criterion_example3,
        ),
        ("5 property suite", criterion_properties),
        ("6 linear oracle", criterion_linear_oracle),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {name}: {} ({detail})",
            if passed { "PASS" } else { "FAIL" }
        );
        if !passed {
            failed += 1;
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
