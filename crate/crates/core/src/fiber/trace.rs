//! Predictor-corrector tracing of a fiber by its height, and the diagnostic
//! lower bound of the horizontal Jacobian along a trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FiberPoint, Problem};
use crate::decomposition::Part;
use crate::error::{FiberError, Result};
use crate::linalg::LinearOperator;
use crate::Vector;

#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: f64,
    pub point: FiberPoint,
}

#[derive(Debug)]
pub struct Trace {
    /// Unit direction in height space.
    pub direction: Vec<f64>,
    pub samples: Vec<TraceSample>,
    /// Height parameter and error of the corrector failure that ended the trace early.
    pub failure: Option<(f64, FiberError)>,
}

impl Trace {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn ts(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

fn unit_direction(direction: &[f64], dim: usize) -> Result<Vec<f64>> {
    if direction.len() != dim {
        return Err(FiberError::DimensionMismatch {
            expected: dim,
            got: direction.len(),
        });
    }
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(FiberError::InvalidParameter(
            "trace direction must be nonzero".into(),
        ));
    }
    Ok(direction.iter().map(|d| d / norm).collect())
}

/// Samples the fiber at heights `t·direction` for `steps + 1` uniform `t` in
/// `[t_min, t_max]` (one sample when the range is empty).
///
/// The first point is found from `u_start`; each later point is predicted by a
/// vertical step from the previous one and corrected horizontally.
pub fn trace_fiber(
    problem: &Problem,
    t_range: [f64; 2],
    steps: usize,
    direction: &[f64],
    u_start: &Vector,
) -> Result<Trace> {
    let [t_min, t_max] = t_range;
    if t_min > t_max {
        return Err(FiberError::InvalidParameter(format!(
            "empty trace range [{t_min}, {t_max}]"
        )));
    }
    let direction = unit_direction(direction, problem.vertical_dim())?;
    let ts: Vec<f64> = if t_min == t_max || steps == 0 {
        vec![t_min]
    } else {
        (0..=steps)
            .map(|k| t_min + (t_max - t_min) * k as f64 / steps as f64)
            .collect()
    };
    let height = |t: f64| direction.iter().map(|d| t * d).collect::<Vec<_>>();
    let step_vector = problem.decomposition.vertical_x(&direction);

    let mut trace = Trace {
        direction: direction.clone(),
        samples: Vec::with_capacity(ts.len()),
        failure: None,
    };
    let mut previous: Option<(f64, Vector)> = None;
    for &t in &ts {
        let guess = match &previous {
            Some((tp, up)) => up + &step_vector * (t - tp),
            None => u_start.clone(),
        };
        match problem.find_fiber_point(&height(t), &guess) {
            Ok(point) => {
                log::debug!("trace t = {t}: F-heights {:?}", point.f_heights);
                previous = Some((t, point.u.clone()));
                trace.samples.push(TraceSample { t, point });
            }
            Err(e) => {
                log::warn!("trace corrector failed at t = {t}: {e}");
                trace.failure = Some((t, e));
                break;
            }
        }
    }
    Ok(trace)
}

/// Smallest singular value of the horizontal block of `L_u` from `(W_p, X)` to
/// `(W_d, Y)`, by inverse iteration on the normal operator.
fn horizontal_singular_value(problem: &Problem, u: &Vector, seed: u64) -> Result<f64> {
    let d = &problem.decomposition;
    let k = d.stiffness();
    let l = problem.extended_jacobian(u)?;
    let tol = problem.tol.linear;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = d.project_x(
        &Vector::from_fn(problem.dim(), |_, _| rng.gen_range(-1.0..1.0)),
        Part::Horizontal,
    );
    h /= d.x_norm(&h);
    let mut sigma = f64::INFINITY;
    for _ in 0..100 {
        // (BᵀK⁻¹B)⁻¹ K h = B⁻¹ K B⁻ᵀ K h, and B is symmetric here
        let w = d.project_x(&l.solve(&k.mul_vec(&h), tol)?, Part::Horizontal);
        let mut next = d.project_x(&l.solve(&k.mul_vec(&w), tol)?, Part::Horizontal);
        next /= d.x_norm(&next);
        let estimate = d.y_norm(&l.apply(&next))?;
        let change = (sigma - estimate).abs();
        sigma = estimate;
        h = next;
        if change <= 1e-10 * sigma {
            break;
        }
    }
    Ok(sigma)
}

/// Empirical lower bound `min ‖DF_v h‖_Y / ‖h‖_X` over the given fiber points.
/// Diagnostic only; an estimation failure yields 0 with a warning.
pub fn lower_bound_estimate(problem: &Problem, points: &[FiberPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(FiberError::InvalidParameter(
            "no fiber points to estimate from".into(),
        ));
    }
    if problem.vertical_dim() >= problem.dim() {
        return Err(FiberError::InvalidParameter(
            "horizontal space is empty".into(),
        ));
    }
    let mut bound = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        match horizontal_singular_value(problem, &p.u, 17 + i as u64) {
            Ok(s) => bound = bound.min(s),
            Err(e) => {
                log::warn!("lower bound estimation failed at point {i}: {e}");
                return Ok(0.0);
            }
        }
    }
    Ok(bound)
}
