//! The discrete map `F(u) = Ku - N(u)`, fiber search on a horizontal affine
//! subspace, and fiber tracing by height stepping.

pub mod continuation;
pub mod jacobian;
pub mod trace;

use std::sync::Arc;

use serde::Serialize;

use crate::decomposition::{Decomposition, Part};
use crate::error::{FiberError, Result};
use crate::fem::FemSystem;
use crate::io;
use crate::linalg::{smallest_eigenpairs, EigenBasis, EigenOptions, SpdFactorization};
use crate::mesh::uniform_rectangle_mesh;
use crate::problems::{Nonlinearity, ProblemSpec, RhsSpec, Tolerances};
use crate::Vector;

pub use continuation::{
    continuation_solve, plain_newton, ContinuationLog, ContinuationOptions, HomotopySystem,
    NewtonRecord,
};
pub use jacobian::{extended_jacobian_solve, ExtendedJacobian};
pub use trace::{lower_bound_estimate, trace_fiber, Trace, TraceSample};

/// A point of the fiber `F⁻¹(g + V_d)`.
#[derive(Debug, Clone, Serialize)]
pub struct FiberPoint {
    #[serde(skip)]
    pub u: Vector,
    /// `heights_X(u)`: where the point sits along the vertical space.
    pub heights: Vec<f64>,
    /// `‖Q_Y(F(u) - g)‖_Y`.
    pub residual_h: f64,
    /// `‖F(u) - g‖_Y`.
    pub residual_full: f64,
    /// `heights_Y(F(u))`.
    pub f_heights: Vec<f64>,
    pub newton_iters: usize,
}

/// Everything needed to evaluate and invert `F` on one mesh: operators, the
/// spectral split, the nonlinearity and the right-hand side `g` (as a dual vector).
pub struct Problem {
    pub fem: FemSystem,
    pub basis: EigenBasis,
    pub decomposition: Decomposition,
    pub nonlinearity: Nonlinearity,
    pub rhs: Vector,
    pub tol: Tolerances,
    /// Default starting function for fiber searches.
    pub start: Vector,
    rhs_norm: f64,
}

impl Problem {
    /// Assembles the mesh and operators, computes `k` eigenpairs and the index set.
    pub fn build(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.mesh;
        let mesh = uniform_rectangle_mesh(m.width, m.height, m.nx, m.ny)?;
        let fem = FemSystem::new(mesh)?;
        if spec.k > fem.dim() {
            return Err(FiberError::Config(format!(
                "k = {} exceeds the {} interior unknowns",
                spec.k,
                fem.dim()
            )));
        }
        let spd = Arc::new(SpdFactorization::new(&fem.stiffness)?);
        let basis = smallest_eigenpairs(&spd, &fem.mass, spec.k, &EigenOptions::default())?;
        let largest = *basis.eigenvalues.last().expect("k >= 1");
        if largest <= spec.interval[1] {
            return Err(FiberError::Config(format!(
                "largest computed eigenvalue {largest} does not exceed the interval end {}; \
                 increase k so the index set is complete",
                spec.interval[1]
            )));
        }
        let decomposition = Decomposition::new(&basis, spec.interval, spd, &fem.mass);
        let start = match &spec.start {
            Some(c) => combination(&basis, c)?,
            None => Vector::zeros(fem.dim()),
        };
        let mut problem =
            Self::from_parts(fem, basis, decomposition, spec.nonlinearity, None, spec.tol)?;
        problem.start = start;
        let rhs = match &spec.rhs {
            RhsSpec::Biquadratic { .. } => {
                let field = spec.rhs.field(m.width, m.height).expect("field rhs");
                problem.fem.load(field)?
            }
            RhsSpec::Zero => Vector::zeros(problem.fem.dim()),
            RhsSpec::CustomCsv { path } => {
                let v = io::read_vector_csv(path)?;
                if v.len() != problem.fem.dim() {
                    return Err(FiberError::DimensionMismatch {
                        expected: problem.fem.dim(),
                        got: v.len(),
                    });
                }
                v
            }
            RhsSpec::FiberImage { coefficients } => {
                let u = combination(&problem.basis, coefficients)?;
                problem.evaluate_f(&u)?
            }
        };
        problem.set_rhs(rhs)?;
        Ok(problem)
    }

    /// Builds a problem from precomputed parts; `rhs = None` means `g = 0`.
    pub fn from_parts(
        fem: FemSystem,
        basis: EigenBasis,
        decomposition: Decomposition,
        nonlinearity: Nonlinearity,
        rhs: Option<Vector>,
        tol: Tolerances,
    ) -> Result<Self> {
        let n = fem.dim();
        let mut problem = Self {
            fem,
            basis,
            decomposition,
            nonlinearity,
            rhs: Vector::zeros(n),
            tol,
            start: Vector::zeros(n),
            rhs_norm: 0.0,
        };
        if let Some(g) = rhs {
            problem.set_rhs(g)?;
        }
        Ok(problem)
    }

    pub fn set_rhs(&mut self, rhs: Vector) -> Result<()> {
        if rhs.len() != self.dim() {
            return Err(FiberError::DimensionMismatch {
                expected: self.dim(),
                got: rhs.len(),
            });
        }
        self.rhs_norm = self.decomposition.y_norm(&rhs)?;
        self.rhs = rhs;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.fem.dim()
    }

    /// `|J|`.
    pub fn vertical_dim(&self) -> usize {
        self.decomposition.dim()
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    /// Newton stopping threshold `max(newton_abs, newton_rel·‖g‖_Y)`.
    pub fn newton_tolerance(&self) -> f64 {
        self.tol.newton_abs.max(self.tol.newton_rel * self.rhs_norm)
    }

    /// `F(u) = Ku - ∫ f(u_h) θ_i`, the weak-form residual functional.
    pub fn evaluate_f(&self, u: &Vector) -> Result<Vector> {
        let nl = self.nonlinearity;
        let load = self.fem.nonlinear_load(u, move |x| nl.value(x))?;
        Ok(self.fem.stiffness.mul_vec(u) - load)
    }

    /// Extended Jacobian at `u` (weight `f'(u_h)` at the quadrature points).
    pub fn extended_jacobian(&self, u: &Vector) -> Result<ExtendedJacobian<'_>> {
        let weights: Vec<f64> = self
            .fem
            .values_at_quadrature(u)?
            .into_iter()
            .map(|x| self.nonlinearity.derivative(x))
            .collect();
        let a = self.fem.weighted_mass(&weights)?;
        Ok(ExtendedJacobian::new(&self.decomposition, a))
    }

    /// Right-hand side with the horizontal part of `g` and vertical heights `z`:
    /// `Q_Y g + Σ_j z_j φ_j^Y`.
    pub fn rhs_with_heights(&self, z: &[f64]) -> Vector {
        self.decomposition.project_y(&self.rhs, Part::Horizontal) + self.decomposition.vertical_y(z)
    }

    /// Measures `u` against the fiber of `g`.
    pub fn fiber_point(&self, u: Vector, newton_iters: usize) -> Result<FiberPoint> {
        let fu = self.evaluate_f(&u)?;
        let r = &fu - &self.rhs;
        let d = &self.decomposition;
        Ok(FiberPoint {
            heights: d.heights_x(&u),
            residual_h: d.y_norm(&d.project_y(&r, Part::Horizontal))?,
            residual_full: d.y_norm(&r)?,
            f_heights: d.heights_y(&fu),
            newton_iters,
            u,
        })
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            tolerance: self.newton_tolerance(),
            ..Default::default()
        }
    }

    /// The point of the fiber of `g` at height `v_height`, searched on the
    /// horizontal affine subspace through `u0` shifted to that height.
    pub fn find_fiber_point(&self, v_height: &[f64], u0: &Vector) -> Result<FiberPoint> {
        self.find_fiber_point_logged(v_height, u0).map(|(p, _)| p)
    }

    pub fn find_fiber_point_logged(
        &self,
        v_height: &[f64],
        u0: &Vector,
    ) -> Result<(FiberPoint, ContinuationLog)> {
        if v_height.len() != self.vertical_dim() {
            return Err(FiberError::DimensionMismatch {
                expected: self.vertical_dim(),
                got: v_height.len(),
            });
        }
        let at_height = self
            .decomposition
            .heights_x(u0)
            .iter()
            .zip(v_height)
            .all(|(h, v)| (h - v).abs() <= 1e-14 * (1.0 + v.abs()));
        let start = if at_height {
            u0.clone()
        } else {
            self.decomposition.shift_to_height(u0, v_height)
        };
        let system = HorizontalSystem { problem: self };
        let (u, log) = continuation_solve(&system, &start, &self.continuation_options())?;
        let point = self.fiber_point(u, log.newton_iterations)?;
        if point.residual_h > self.tol.fiber {
            return Err(FiberError::ContinuationStalled {
                t: 0.0,
                step: 0.0,
                residual: point.residual_h,
            });
        }
        Ok((point, log))
    }

    /// The same horizontal problem, solved by plain Newton without continuation.
    pub fn find_fiber_point_plain(
        &self,
        v_height: &[f64],
        u0: &Vector,
    ) -> Result<(FiberPoint, ContinuationLog)> {
        let start = self.decomposition.shift_to_height(u0, v_height);
        let system = HorizontalSystem { problem: self };
        let (u, log) = plain_newton(&system, &start, &self.continuation_options())?;
        Ok((self.fiber_point(u, log.newton_iterations)?, log))
    }
}

/// `Σ_k c_k φ_k^X` over the full eigenbasis.
pub fn combination(basis: &EigenBasis, coefficients: &[f64]) -> Result<Vector> {
    if coefficients.len() > basis.len() {
        return Err(FiberError::Config(format!(
            "{} coefficients given but only {} eigenpairs computed",
            coefficients.len(),
            basis.len()
        )));
    }
    let n = basis.eigenvectors[0].len();
    let mut u = Vector::zeros(n);
    for (k, &c) in coefficients.iter().enumerate() {
        u.axpy(c / basis.eigenvalues[k].sqrt(), &basis.eigenvectors[k], 1.0);
    }
    Ok(u)
}

/// `R(u) = Q_Y(F(u) - g)` on a horizontal affine subspace; Newton corrections
/// come from the extended Jacobian and are re-projected onto `W_p`.
pub struct HorizontalSystem<'a> {
    pub problem: &'a Problem,
}

impl HomotopySystem for HorizontalSystem<'_> {
    fn residual(&self, u: &Vector) -> Result<Vector> {
        let p = self.problem;
        let r = p.evaluate_f(u)? - &p.rhs;
        Ok(p.decomposition.project_y(&r, Part::Horizontal))
    }

    fn norm(&self, r: &Vector) -> Result<f64> {
        self.problem.decomposition.y_norm(r)
    }

    fn correction(&self, u: &Vector, r: &Vector) -> Result<Vector> {
        let p = self.problem;
        let l = p.extended_jacobian(u)?;
        let delta = l.solve(&(-r), p.tol.linear)?;
        Ok(p.decomposition.project_x(&delta, Part::Horizontal))
    }

    fn monitor(&self, u: &Vector) -> Vec<f64> {
        self.problem.decomposition.heights_x(u)
    }
}
