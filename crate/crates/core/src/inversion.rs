//! Inversion of the finite-dimensional fiber map `v ↦ heights_Y(F(ζ(v)))`:
//! crossings of a traced one-dimensional fiber, images of planar paths,
//! self-intersections of closed image curves and preimage refinement.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{FiberError, Result};
use crate::fiber::{FiberPoint, Problem, Trace};
use crate::problems::Path2dSpec;
use crate::{parallel, Vector};

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub parameter: Vec<f64>,
    pub mismatch: f64,
}

/// A solution of `F(u) = g_target`, where `g_target` keeps the horizontal part of
/// the configured `g` and has vertical heights `target`.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    #[serde(skip)]
    pub u: Vector,
    /// `‖F(u) - g_target‖_Y`.
    pub residual: f64,
    /// `heights_X(u)`.
    pub height: Vec<f64>,
    pub f_heights: Vec<f64>,
    pub target: Vec<f64>,
    pub newton_path: Vec<IterationRecord>,
}

fn make_solution(
    problem: &Problem,
    point: FiberPoint,
    target: &[f64],
    path: Vec<IterationRecord>,
) -> Result<Solution> {
    let g = problem.rhs_with_heights(target);
    let fu = problem.evaluate_f(&point.u)?;
    let residual = problem.decomposition.y_norm(&(fu - g))?;
    Ok(Solution {
        u: point.u,
        residual,
        height: point.heights,
        f_heights: point.f_heights,
        target: target.to_vec(),
        newton_path: path,
    })
}

/// A local extremum of the height curve lying within resolution of the target.
#[derive(Debug, Clone, Serialize)]
pub struct Grazing {
    pub t: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Crossings {
    pub solutions: Vec<Solution>,
    pub grazing: Vec<Grazing>,
}

const MAX_SECANT_STEPS: usize = 60;

/// Solutions along a one-dimensional fiber trace: every sign change of
/// `F-height(t) - target` between adjacent samples is refined by secant steps
/// (bisection when a secant step leaves the bracket), each step a fiber search.
pub fn solve_1d(problem: &Problem, trace: &Trace, target: f64) -> Result<Crossings> {
    if problem.vertical_dim() != 1 {
        return Err(FiberError::InvalidParameter(format!(
            "solve_1d needs |J| = 1, got {}",
            problem.vertical_dim()
        )));
    }
    let dir = trace.direction[0];
    let mut samples: Vec<(f64, f64, &FiberPoint)> = trace
        .samples
        .iter()
        .map(|s| (s.t, s.point.f_heights[0] - target, &s.point))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);

    let tol_h = 0.01 * problem.tol.solution;
    let mut solutions = Vec::new();
    let mut grazing = Vec::new();
    let eval = |t: f64, warm: &Vector| -> Result<(f64, FiberPoint)> {
        let p = problem.find_fiber_point(&[t * dir], warm)?;
        Ok((p.f_heights[0] - target, p))
    };

    for (k, &(t, d, point)) in samples.iter().enumerate() {
        if d == 0.0 {
            let rec = vec![IterationRecord {
                parameter: vec![t],
                mismatch: 0.0,
            }];
            solutions.push(make_solution(problem, point.clone(), &[target], rec)?);
            continue;
        }
        if k > 0 && k + 1 < samples.len() {
            let (dp, dn) = (samples[k - 1].1, samples[k + 1].1);
            let extremum = (d - dp) * (dn - d) < 0.0;
            if extremum && dp * d > 0.0 && dn * d > 0.0 && d.abs() < 10.0 * problem.tol.fiber {
                grazing.push(Grazing { t, offset: d });
            }
        }
        let Some(&(tn, dn, pn)) = samples.get(k + 1) else {
            continue;
        };
        if d * dn >= 0.0 {
            continue;
        }

        let (mut lo, mut d_lo) = (t, d);
        let mut hi = tn;
        let mut prev = (t, d);
        let mut cur = (tn, dn);
        let mut warm = if d.abs() < dn.abs() {
            point.u.clone()
        } else {
            pn.u.clone()
        };
        let mut path = Vec::new();
        let mut found = None;
        for _ in 0..MAX_SECANT_STEPS {
            let mut t_new = cur.0 - cur.1 * (cur.0 - prev.0) / (cur.1 - prev.1);
            if !(t_new > lo.min(hi) && t_new < lo.max(hi)) || !t_new.is_finite() {
                t_new = 0.5 * (lo + hi);
            }
            let (d_new, p) = eval(t_new, &warm)?;
            path.push(IterationRecord {
                parameter: vec![t_new],
                mismatch: d_new,
            });
            if d_new.abs() <= tol_h {
                found = Some(p);
                break;
            }
            if d_new * d_lo > 0.0 {
                lo = t_new;
                d_lo = d_new;
            } else {
                hi = t_new;
            }
            warm = p.u;
            prev = cur;
            cur = (t_new, d_new);
        }
        match found {
            Some(p) => solutions.push(make_solution(problem, p, &[target], path)?),
            None => {
                return Err(FiberError::UnresolvedBracket {
                    lo,
                    hi,
                    steps: MAX_SECANT_STEPS,
                })
            }
        }
    }
    Ok(Crossings { solutions, grazing })
}

/// A path in the two-dimensional height space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PathKind {
    Circle {
        radius: f64,
    },
    /// From the origin along `angle` (radians) out to `length`.
    Ray {
        angle: f64,
        length: f64,
    },
    Segment {
        from: [f64; 2],
        to: [f64; 2],
    },
    Samples {
        points: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSpec {
    pub kind: PathKind,
    pub resolution: usize,
}

impl PathSpec {
    pub fn circle(radius: f64, resolution: usize) -> Self {
        Self {
            kind: PathKind::Circle { radius },
            resolution,
        }
    }

    pub fn ray(angle: f64, length: f64, resolution: usize) -> Self {
        Self {
            kind: PathKind::Ray { angle, length },
            resolution,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.kind, PathKind::Circle { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PathKind::Circle { radius } => {
                if !(*radius > 0.0) || self.resolution < 8 {
                    return Err(FiberError::InvalidParameter(
                        "circle needs radius > 0 and at least 8 samples".into(),
                    ));
                }
            }
            PathKind::Samples { points } if points.is_empty() => {
                return Err(FiberError::InvalidParameter("empty sample path".into()))
            }
            PathKind::Ray { length, .. } if !(*length >= 0.0) => {
                return Err(FiberError::InvalidParameter(
                    "ray length must be nonnegative".into(),
                ))
            }
            _ => {
                if self.resolution < 1 {
                    return Err(FiberError::InvalidParameter(
                        "path resolution must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Curve parameters `s` and height-space points.
    pub fn sample(&self) -> (Vec<f64>, Vec<[f64; 2]>) {
        let n = self.resolution;
        let frac = |i: usize| {
            if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            }
        };
        match &self.kind {
            PathKind::Circle { radius } => (0..n)
                .map(|i| {
                    let s = 2.0 * PI * i as f64 / n as f64;
                    (s, [radius * s.cos(), radius * s.sin()])
                })
                .unzip(),
            PathKind::Ray { angle, length } => (0..n)
                .map(|i| {
                    let s = length * frac(i);
                    (s, [s * angle.cos(), s * angle.sin()])
                })
                .unzip(),
            PathKind::Segment { from, to } => (0..n)
                .map(|i| {
                    let s = frac(i);
                    (
                        s,
                        [
                            from[0] + s * (to[0] - from[0]),
                            from[1] + s * (to[1] - from[1]),
                        ],
                    )
                })
                .unzip(),
            PathKind::Samples { points } => points
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as f64, p))
                .unzip(),
        }
    }

    /// Height-space point at curve parameter `s`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match &self.kind {
            PathKind::Circle { radius } => [radius * s.cos(), radius * s.sin()],
            PathKind::Ray { angle, .. } => [s * angle.cos(), s * angle.sin()],
            PathKind::Segment { from, to } => [
                from[0] + s * (to[0] - from[0]),
                from[1] + s * (to[1] - from[1]),
            ],
            PathKind::Samples { points } => {
                let i = (s.floor().max(0.0) as usize).min(points.len() - 1);
                let j = (i + 1).min(points.len() - 1);
                let a = s - i as f64;
                [
                    points[i][0] + a * (points[j][0] - points[i][0]),
                    points[i][1] + a * (points[j][1] - points[i][1]),
                ]
            }
        }
    }
}

/// Image of a path under `v ↦ heights_Y(F(ζ(v)))`.
#[derive(Debug)]
pub struct PlanarCurve {
    pub path: PathSpec,
    pub s: Vec<f64>,
    pub v: Vec<[f64; 2]>,
    pub b: Vec<[f64; 2]>,
    pub residual_h: Vec<f64>,
    /// Fiber points `ζ(v)` for warm starts.
    pub states: Vec<Vector>,
    pub failure: Option<(usize, FiberError)>,
}

impl PlanarCurve {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Closing period of the parameter, for closed paths.
    pub fn period(&self) -> Option<f64> {
        self.path.is_closed().then_some(2.0 * PI)
    }

    /// Index of the sample nearest to parameter `s`.
    pub fn nearest_sample(&self, s: f64) -> usize {
        let dist = |x: f64| match self.period() {
            Some(p) => {
                let d = (x - s).rem_euclid(p);
                d.min(p - d)
            }
            None => (x - s).abs(),
        };
        (0..self.s.len())
            .min_by(|&a, &b| dist(self.s[a]).total_cmp(&dist(self.s[b])))
            .unwrap_or(0)
    }
}

/// Samples `ζ` along `path` (each sample warm-started from the previous one)
/// and records the F-heights.
pub fn image_path_2d(problem: &Problem, path: &PathSpec, u_start: &Vector) -> Result<PlanarCurve> {
    if problem.vertical_dim() != 2 {
        return Err(FiberError::InvalidParameter(format!(
            "planar paths need |J| = 2, got {}",
            problem.vertical_dim()
        )));
    }
    path.validate()?;
    let (s, v) = path.sample();
    let mut curve = PlanarCurve {
        path: path.clone(),
        s: Vec::with_capacity(s.len()),
        v: Vec::with_capacity(s.len()),
        b: Vec::with_capacity(s.len()),
        residual_h: Vec::with_capacity(s.len()),
        states: Vec::with_capacity(s.len()),
        failure: None,
    };
    let mut warm = u_start.clone();
    for (i, (&si, &vi)) in s.iter().zip(&v).enumerate() {
        match problem.find_fiber_point(&vi, &warm) {
            Ok(p) => {
                curve.s.push(si);
                curve.v.push(vi);
                curve.b.push([p.f_heights[0], p.f_heights[1]]);
                curve.residual_h.push(p.residual_h);
                warm = p.u.clone();
                curve.states.push(p.u);
            }
            Err(e) => {
                log::warn!("path sample {i} at {vi:?} failed: {e}");
                curve.failure = Some((i, e));
                break;
            }
        }
    }
    Ok(curve)
}

/// Images of several independent paths, computed concurrently.
pub fn image_paths(
    problem: &Problem,
    paths: &[PathSpec],
    u_start: &Vector,
) -> Vec<Result<PlanarCurve>> {
    parallel::map_slice(paths, |p| image_path_2d(problem, p, u_start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfIntersection {
    pub point: [f64; 2],
    pub s1: f64,
    pub s2: f64,
    /// Segment indices (segment `i` joins samples `i` and `i + 1`).
    pub segments: (usize, usize),
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// All crossings between non-adjacent segments of a sampled curve, sorted by
/// `s₁`. For a closed curve the segment from the last sample back to the first
/// is included and its parameter runs up to `s₀ + period`.
pub fn find_self_intersection(
    points: &[[f64; 2]],
    s: &[f64],
    closed: bool,
    period: Option<f64>,
) -> Vec<SelfIntersection> {
    let n = points.len();
    if n < 4 {
        return Vec::new();
    }
    let segments = if closed { n } else { n - 1 };
    let end_param = |i: usize| {
        if i + 1 < n {
            s[i + 1]
        } else {
            s[0] + period.unwrap_or(s[n - 1] - s[0] + (s[1] - s[0]))
        }
    };
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let scale = (xmax - xmin).hypot(ymax - ymin).max(f64::MIN_POSITIVE);
    let eps = 1e-9;

    let per_segment = parallel::map_range(segments, |i| {
        let p0 = points[i];
        let r = sub2(points[(i + 1) % n], p0);
        let mut found = Vec::new();
        for j in i + 2..segments {
            if closed && i == 0 && j == segments - 1 {
                continue;
            }
            let p2 = points[j];
            let q = sub2(points[(j + 1) % n], p2);
            let denom = cross2(r, q);
            if denom.abs() <= 1e-14 * (r[0].hypot(r[1]) * q[0].hypot(q[1])) {
                continue;
            }
            let w = sub2(p2, p0);
            let a = cross2(w, q) / denom;
            let b = cross2(w, r) / denom;
            if a >= -eps && a <= 1.0 + eps && b >= -eps && b <= 1.0 + eps {
                let a = a.clamp(0.0, 1.0);
                let b = b.clamp(0.0, 1.0);
                found.push(SelfIntersection {
                    point: [p0[0] + a * r[0], p0[1] + a * r[1]],
                    s1: s[i] + a * (end_param(i) - s[i]),
                    s2: s[j] + b * (end_param(j) - s[j]),
                    segments: (i, j),
                });
            }
        }
        found
    });

    // a crossing through a shared sample shows up once per incident segment pair
    let near = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d <= 1 || (closed && d == segments - 1)
    };
    let mut merged: Vec<SelfIntersection> = Vec::new();
    for x in per_segment.into_iter().flatten() {
        let duplicate = merged.iter().any(|m| {
            let close = sub2(m.point, x.point);
            close[0].hypot(close[1]) <= 1e-8 * scale
                && ((near(m.segments.0, x.segments.0) && near(m.segments.1, x.segments.1))
                    || (near(m.segments.0, x.segments.1) && near(m.segments.1, x.segments.0)))
        });
        if !duplicate {
            merged.push(x);
        }
    }
    merged.sort_by(|a, b| a.s1.total_cmp(&b.s1));
    merged
}

/// Self-intersections of an imaged path.
pub fn curve_self_intersections(curve: &PlanarCurve) -> Vec<SelfIntersection> {
    let closed = curve.path.is_closed() && curve.failure.is_none();
    find_self_intersection(&curve.b, &curve.s, closed, curve.period())
}

/// Fiber chart evaluation `b(v) = heights_Y(F(ζ(v)))`.
pub fn fiber_map(
    problem: &Problem,
    v: [f64; 2],
    warm: &Vector,
) -> Result<(Vector2<f64>, FiberPoint)> {
    let p = problem.find_fiber_point(&v, warm)?;
    Ok((Vector2::new(p.f_heights[0], p.f_heights[1]), p))
}

/// Central-difference Jacobian of `b` at `v` with step `delta`.
pub fn fd_jacobian(
    problem: &Problem,
    v: [f64; 2],
    delta: f64,
    warm: &Vector,
) -> Result<Matrix2<f64>> {
    let mut j = Matrix2::zeros();
    for k in 0..2 {
        let mut plus = v;
        let mut minus = v;
        plus[k] += delta;
        minus[k] -= delta;
        let (bp, _) = fiber_map(problem, plus, warm)?;
        let (bm, _) = fiber_map(problem, minus, warm)?;
        j.set_column(k, &((bp - bm) / (2.0 * delta)));
    }
    Ok(j)
}

/// Default finite-difference step `1e-4·(1 + ‖v‖)`.
pub fn fd_step(v: [f64; 2]) -> f64 {
    1e-4 * (1.0 + v[0].hypot(v[1]))
}

const MAX_PREIMAGE_ITERATIONS: usize = 50;

/// Damped Newton on `b(v) = z` with a finite-difference Jacobian, starting at
/// `v_start` with fiber warm start `warm`.
pub fn refine_preimage(
    problem: &Problem,
    v_start: [f64; 2],
    z_target: [f64; 2],
    warm: &Vector,
) -> Result<Solution> {
    if problem.vertical_dim() != 2 {
        return Err(FiberError::InvalidParameter(format!(
            "preimage refinement needs |J| = 2, got {}",
            problem.vertical_dim()
        )));
    }
    let z = Vector2::new(z_target[0], z_target[1]);
    let tol = 0.01 * problem.tol.solution;
    let mut v = v_start;
    let (mut b, mut point) = fiber_map(problem, v, warm)?;
    let mut path = Vec::new();
    for _ in 0..MAX_PREIMAGE_ITERATIONS {
        let mismatch = (b - z).norm();
        path.push(IterationRecord {
            parameter: v.to_vec(),
            mismatch,
        });
        if mismatch <= tol {
            return make_solution(problem, point, &z_target, path);
        }
        let jac = fd_jacobian(problem, v, fd_step(v), &point.u)?;
        let sv = jac.singular_values();
        let rcond = sv.min() / sv.max();
        if !(rcond >= 1e-12) {
            return Err(FiberError::IllConditioned { rcond });
        }
        let step = jac
            .lu()
            .solve(&(z - b))
            .ok_or(FiberError::IllConditioned { rcond })?;
        let mut lambda = 1.0;
        loop {
            let trial = [v[0] + lambda * step[0], v[1] + lambda * step[1]];
            // failed fiber search counts as a rejected step
            if let Ok((bt, pt)) = fiber_map(problem, trial, &point.u) {
                if (bt - z).norm() <= (1.0 - 1e-4 * lambda) * mismatch {
                    v = trial;
                    b = bt;
                    point = pt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 2f64.powi(-12) {
                return Err(FiberError::LineSearch {
                    v: v.to_vec(),
                    mismatch,
                });
            }
        }
    }
    Err(FiberError::LineSearch {
        v: v.to_vec(),
        mismatch: (b - z).norm(),
    })
}

/// Preimages of the double point of a circle image plus those found along the
/// horizontal axis of the height plane.
#[derive(Debug)]
pub struct DoublePointReport {
    pub circle: PlanarCurve,
    pub axes: Vec<PlanarCurve>,
    pub intersections: Vec<SelfIntersection>,
    pub z: [f64; 2],
    pub solutions: Vec<(String, Solution)>,
}

/// The circle / half-axis construction: image the circle, take its first double
/// point `Z`, refine its two circle preimages, then scan both horizontal half-axes
/// for brackets of `b₁ = Z₁` and refine those as well.
pub fn double_point_solutions(
    problem: &Problem,
    spec: &Path2dSpec,
    u_start: &Vector,
) -> Result<DoublePointReport> {
    let circle_path = PathSpec::circle(spec.radius, spec.resolution);
    let axis_paths = [
        PathSpec::ray(0.0, spec.axis_length, spec.axis_resolution),
        PathSpec::ray(PI, spec.axis_length, spec.axis_resolution),
    ];
    let mut all = vec![circle_path.clone()];
    all.extend(axis_paths.iter().cloned());
    let mut images = image_paths(problem, &all, u_start).into_iter();
    let circle = images.next().expect("circle")?;
    if let Some((i, e)) = &circle.failure {
        return Err(FiberError::Corrector {
            height: circle_path.sample().1[*i].to_vec(),
            source: Box::new(FiberError::InvalidParameter(e.to_string())),
        });
    }
    let axes = images.collect::<Result<Vec<_>>>()?;
    let intersections = curve_self_intersections(&circle);
    let Some(first) = intersections.first().copied() else {
        return Ok(DoublePointReport {
            circle,
            axes,
            intersections,
            z: [f64::NAN; 2],
            solutions: Vec::new(),
        });
    };

    let chord_z = first.point;
    let mut pair = Vec::new();
    for s in [first.s1, first.s2] {
        let v = circle_path.point_at(s);
        let warm = &circle.states[circle.nearest_sample(s)];
        pair.push(refine_preimage(problem, v, chord_z, warm)?);
    }
    let z = [
        0.5 * (pair[0].f_heights[0] + pair[1].f_heights[0]),
        0.5 * (pair[0].f_heights[1] + pair[1].f_heights[1]),
    ];
    let mut solutions = Vec::new();
    pair.sort_by(|a, b| b.height[1].total_cmp(&a.height[1]));
    let mut pair = pair.into_iter();
    solutions.push(("U".to_string(), pair.next().expect("two")));
    solutions.push(("D".to_string(), pair.next().expect("two")));

    let mut axis_solutions = Vec::new();
    for axis in &axes {
        for i in 0..axis.len().saturating_sub(1) {
            let (d0, d1) = (axis.b[i][0] - z[0], axis.b[i + 1][0] - z[0]);
            if d0 * d1 <= 0.0 && d0 != d1 {
                let a = d0 / (d0 - d1);
                let v = [
                    axis.v[i][0] + a * (axis.v[i + 1][0] - axis.v[i][0]),
                    axis.v[i][1] + a * (axis.v[i + 1][1] - axis.v[i][1]),
                ];
                axis_solutions.push(refine_preimage(problem, v, z, &axis.states[i])?);
            }
        }
    }
    axis_solutions.sort_by(|a, b| a.height[0].total_cmp(&b.height[0]));
    axis_solutions.dedup_by(|a, b| {
        (a.height[0] - b.height[0]).abs() < 1e-6 && (a.height[1] - b.height[1]).abs() < 1e-6
    });
    let n_axis = axis_solutions.len();
    for (i, s) in axis_solutions.into_iter().enumerate() {
        let label = match (n_axis, i) {
            (2, 0) => "L".to_string(),
            (2, 1) => "R".to_string(),
            _ => format!("A{i}"),
        };
        solutions.push((label, s));
    }
    let g = problem.rhs_with_heights(&z);
    for s in solutions.iter_mut() {
        s.1.residual = problem
            .decomposition
            .y_norm(&(problem.evaluate_f(&s.1.u)? - &g))?;
        s.1.target = z.to_vec();
    }
    Ok(DoublePointReport {
        circle,
        axes,
        intersections,
        z,
        solutions,
    })
}
