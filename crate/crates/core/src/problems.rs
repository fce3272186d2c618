//! Nonlinearities, right-hand sides and the JSON problem configuration,
//! including the three shipped examples on `[0,1] × [0,2]`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FiberError, Result};

/// Analytic Dirichlet eigenvalue `π²(m²/w² + n²/h²)` of the rectangle `[0,w] × [0,h]`.
pub fn rectangle_eigenvalue(width: f64, height: f64, m: usize, n: usize) -> f64 {
    PI * PI * ((m as f64 / width).powi(2) + (n as f64 / height).powi(2))
}

/// The `count` smallest analytic eigenvalues of the rectangle, with their mode numbers.
pub fn rectangle_spectrum(width: f64, height: f64, count: usize) -> Vec<(f64, usize, usize)> {
    let reach = count + 2;
    let mut modes: Vec<(f64, usize, usize)> = (1..=reach)
        .flat_map(|m| (1..=reach).map(move |n| (rectangle_eigenvalue(width, height, m, n), m, n)))
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    modes.truncate(count);
    modes
}

/// `λ₁ = 5π²/4` of the reference rectangle `[0,1] × [0,2]`.
pub fn reference_lambda1() -> f64 {
    rectangle_eigenvalue(1.0, 2.0, 1, 1)
}

/// `λ₂ = 2π²` of the reference rectangle.
pub fn reference_lambda2() -> f64 {
    rectangle_eigenvalue(1.0, 2.0, 1, 2)
}

/// A nonlinearity `f` with bounded derivative; `f(0) = 0` for every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f'(x) = α·atan(x) + β`.
    Atan { alpha: f64, beta: f64 },
    /// `f'(x) = base + amplitude·sech²((x - center)/width)`.
    Nonconvex {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `f(x) = c·x`.
    Linear { c: f64 },
}

impl Nonlinearity {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Atan { alpha, beta } => {
                alpha * (x * x.atan() - x.hypot(1.0).ln()) + beta * x
            }
            Nonlinearity::Nonconvex {
                base,
                amplitude,
                center,
                width,
            } => {
                base * x
                    + amplitude * width * (((x - center) / width).tanh() + (center / width).tanh())
            }
            Nonlinearity::Linear { c } => c * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Atan { alpha, beta } => alpha * x.atan() + beta,
            Nonlinearity::Nonconvex {
                base,
                amplitude,
                center,
                width,
            } => {
                let s = 1.0 / ((x - center) / width).cosh();
                base + amplitude * s * s
            }
            Nonlinearity::Linear { c } => c,
        }
    }

    /// Closed interval containing the closure of the range of `f'`.
    pub fn bounds(&self) -> [f64; 2] {
        match *self {
            Nonlinearity::Atan { alpha, beta } => {
                [beta - alpha * PI / 2.0, beta + alpha * PI / 2.0]
            }
            Nonlinearity::Nonconvex {
                base, amplitude, ..
            } => [base, base + amplitude],
            Nonlinearity::Linear { c } => [c, c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(FiberError::InvalidParameter(format!(
                    "{name} must be finite"
                )))
            }
        };
        match *self {
            Nonlinearity::Atan { alpha, beta } => {
                finite(alpha, "alpha")?;
                finite(beta, "beta")?;
                if alpha <= 0.0 {
                    return Err(FiberError::InvalidParameter(format!(
                        "alpha must be positive, got {alpha}"
                    )));
                }
            }
            Nonlinearity::Nonconvex {
                base,
                amplitude,
                center,
                width,
            } => {
                for (v, n) in [
                    (base, "base"),
                    (amplitude, "amplitude"),
                    (center, "center"),
                    (width, "width"),
                ] {
                    finite(v, n)?;
                }
                if amplitude <= 0.0 || width <= 0.0 {
                    return Err(FiberError::InvalidParameter(
                        "nonconvex amplitude and width must be positive".into(),
                    ));
                }
            }
            Nonlinearity::Linear { c } => finite(c, "c")?,
        }
        Ok(())
    }
}

/// `f'(x) = α·atan(x) + β` with `f(0) = 0`.
pub fn atan_nonlinearity(alpha: f64, beta: f64) -> Result<Nonlinearity> {
    let n = Nonlinearity::Atan { alpha, beta };
    n.validate()?;
    Ok(n)
}

/// Atan nonlinearity whose derivative ranges over the open interval `(lo, hi)`.
pub fn atan_with_range(lo: f64, hi: f64) -> Result<Nonlinearity> {
    atan_nonlinearity((hi - lo) / PI, 0.5 * (lo + hi))
}

/// Bump nonlinearity; rejected unless `0 < base < λ₁ < base + amplitude < λ₂`,
/// i.e. `f'` stays inside `(0, λ₂)` and crosses `λ₁` going up and coming back down.
pub fn nonconvex_nonlinearity(
    base: f64,
    amplitude: f64,
    center: f64,
    width: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<Nonlinearity> {
    let n = Nonlinearity::Nonconvex {
        base,
        amplitude,
        center,
        width,
    };
    n.validate()?;
    let [a, b] = n.bounds();
    if !(a > 0.0 && a < lambda1 && b > lambda1 && b < lambda2) {
        return Err(FiberError::InvalidParameter(format!(
            "range of f' [{a}, {b}] must lie in (0, {lambda2}) and straddle {lambda1}"
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

/// Right-hand side `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RhsSpec {
    /// `g(x, y) = scale · x(x - w) y(y - h)`.
    Biquadratic {
        scale: f64,
    },
    Zero,
    /// Dual (load) vector read from a `node_index,value` CSV over interior nodes.
    CustomCsv {
        path: String,
    },
    /// `g = F(Σ_k c_k φ_k^X)` over the computed eigenbasis.
    FiberImage {
        coefficients: Vec<f64>,
    },
}

impl RhsSpec {
    pub fn field(&self, width: f64, height: f64) -> Option<impl Fn(f64, f64) -> f64 + Sync + Send> {
        match *self {
            RhsSpec::Biquadratic { scale } => {
                Some(move |x: f64, y: f64| scale * x * (x - width) * y * (y - height))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Bound on `‖Q_Y(F(u) - g)‖_Y` for a fiber point.
    pub fiber: f64,
    /// Bound on `‖F(u) - g‖_Y` for a reported solution.
    pub solution: f64,
    /// Newton stops at `max(newton_abs, newton_rel·‖g‖_Y)`.
    pub newton_abs: f64,
    pub newton_rel: f64,
    /// Relative residual for extended-Jacobian solves inside Newton.
    pub linear: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fiber: 1e-8,
            solution: 1e-7,
            newton_abs: 1e-10,
            newton_rel: 1e-12,
            linear: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub tmin: f64,
    pub tmax: f64,
    pub steps: usize,
    /// Direction in height space; defaults to the first unit vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

/// The circle / half-axis recipe for a two-dimensional vertical space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path2dSpec {
    pub radius: f64,
    pub resolution: usize,
    pub axis_length: f64,
    pub axis_resolution: usize,
}

fn default_k() -> usize {
    3
}

/// One solver run's full definition (the JSON configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mesh: MeshSpec,
    pub nonlinearity: Nonlinearity,
    pub rhs: RhsSpec,
    /// Spectral interval `[ã, b̃]`; must contain the bounds of `f'`.
    pub interval: [f64; 2],
    #[serde(default)]
    pub tol: Tolerances,
    /// Number of eigenpairs to compute; the largest must exceed `interval[1]`.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Starting function `Σ_k c_k φ_k^X` (1-based over the eigenbasis); zero if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path2d: Option<Path2dSpec>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.validate()?;
        let [lo, hi] = self.interval;
        if !(lo <= hi) {
            return Err(FiberError::Config(format!(
                "interval [{lo}, {hi}] is empty"
            )));
        }
        let [a, b] = self.nonlinearity.bounds();
        if a < lo || b > hi {
            return Err(FiberError::Config(format!(
                "interval [{lo}, {hi}] does not contain the range of f' [{a}, {b}]"
            )));
        }
        if self.k == 0 {
            return Err(FiberError::Config("k must be at least 1".into()));
        }
        let t = self.tol;
        if [t.fiber, t.solution, t.newton_abs, t.linear]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(FiberError::Config("tolerances must be positive".into()));
        }
        if let Some(trace) = &self.trace {
            if trace.tmin > trace.tmax {
                return Err(FiberError::Config("trace tmin exceeds tmax".into()));
            }
        }
        if let Some(p) = &self.path2d {
            if !(p.radius > 0.0) || p.resolution < 8 {
                return Err(FiberError::Config(
                    "path2d needs radius > 0 and resolution >= 8".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProblemSpec =
            serde_json::from_str(text).map_err(|e| FiberError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| FiberError::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }
}

fn reference_mesh(n: usize) -> MeshSpec {
    MeshSpec {
        nx: n,
        ny: 2 * n,
        width: 1.0,
        height: 2.0,
    }
}

/// Example 1: convex `f` with `f'` ranging over `((3λ₁ - λ₂)/2, (λ₁ + λ₂)/2)`,
/// so `β = λ₁` and `α = (λ₂ - λ₁)/π`; `g = -100 x(x-1) y(y-2)`; `J = {1}`.
pub fn example_two_solutions() -> ProblemSpec {
    let (l1, l2) = (reference_lambda1(), reference_lambda2());
    let nonlinearity = atan_with_range(0.5 * (3.0 * l1 - l2), 0.5 * (l1 + l2)).expect("valid");
    ProblemSpec {
        mesh: reference_mesh(32),
        nonlinearity,
        rhs: RhsSpec::Biquadratic { scale: -100.0 },
        interval: nonlinearity.bounds(),
        tol: Tolerances::default(),
        k: 3,
        start: None,
        trace: Some(TraceSpec {
            tmin: -60.0,
            tmax: 60.0,
            steps: 48,
            direction: None,
        }),
        path2d: None,
    }
}

/// Example 2: nonconvex `f` (one bump in `f'` crossing `λ₁`), fiber through
/// `u₀ = -50 φ₁^X + 10 φ₂^X`, i.e. `g = F(u₀)`; `J = {1}`.
pub fn example_three_solutions() -> ProblemSpec {
    let (l1, l2) = (reference_lambda1(), reference_lambda2());
    let nonlinearity = nonconvex_nonlinearity(
        EXAMPLE2_BASE,
        EXAMPLE2_AMPLITUDE,
        EXAMPLE2_CENTER,
        EXAMPLE2_WIDTH,
        l1,
        l2,
    )
    .expect("valid");
    ProblemSpec {
        mesh: reference_mesh(32),
        nonlinearity,
        rhs: RhsSpec::FiberImage {
            coefficients: vec![-50.0, 10.0],
        },
        interval: nonlinearity.bounds(),
        tol: Tolerances::default(),
        k: 3,
        start: Some(vec![-50.0, 10.0]),
        trace: Some(TraceSpec {
            tmin: EXAMPLE2_TMIN,
            tmax: EXAMPLE2_TMAX,
            steps: EXAMPLE2_STEPS,
            direction: None,
        }),
        path2d: None,
    }
}

// Bump parameters of example 2: the height curve through u₀ has a local maximum
// and a local minimum on either side of its own level inside the trace window.
pub const EXAMPLE2_BASE: f64 = 6.0;
pub const EXAMPLE2_AMPLITUDE: f64 = 12.0;
pub const EXAMPLE2_CENTER: f64 = -10.0;
pub const EXAMPLE2_WIDTH: f64 = 4.0;
pub const EXAMPLE2_TMIN: f64 = -120.0;
pub const EXAMPLE2_TMAX: f64 = 60.0;
pub const EXAMPLE2_STEPS: usize = 72;

/// Example 3: atan `f` with `f'` ranging over `(10, 25)`, containing `λ₁` and `λ₂`
/// but not `λ₃ = 13π²/4`; `g = 0`, fiber `α₀` through `u₀ = 0`; `J = {1, 2}`.
pub fn example_four_solutions() -> ProblemSpec {
    let nonlinearity = atan_with_range(10.0, 25.0).expect("valid");
    ProblemSpec {
        mesh: reference_mesh(32),
        nonlinearity,
        rhs: RhsSpec::Zero,
        interval: [10.0, 25.0],
        tol: Tolerances::default(),
        k: 4,
        start: None,
        trace: None,
        path2d: Some(Path2dSpec {
            radius: EXAMPLE3_RADIUS,
            resolution: 128,
            axis_length: EXAMPLE3_AXIS_LENGTH,
            axis_resolution: 64,
        }),
    }
}

// Circle radius for example 3 (a free parameter): large enough that the image
// of the circle folds over itself.
pub const EXAMPLE3_RADIUS: f64 = 30.0;
pub const EXAMPLE3_AXIS_LENGTH: f64 = 120.0;

/// Linear `f(u) = c·u` on the reference rectangle with `g = -100 x(x-1) y(y-2)`
/// and `J = {1}` (`c` should lie strictly between `λ₁` and `λ₂`).
pub fn linear_example(c: f64, n: usize) -> ProblemSpec {
    ProblemSpec {
        mesh: reference_mesh(n),
        nonlinearity: Nonlinearity::Linear { c },
        rhs: RhsSpec::Biquadratic { scale: -100.0 },
        interval: [0.5 * reference_lambda1(), c],
        tol: Tolerances::default(),
        k: 3,
        start: None,
        trace: Some(TraceSpec {
            tmin: -20.0,
            tmax: 20.0,
            steps: 8,
            direction: None,
        }),
        path2d: None,
    }
}

/// The three examples, in order.
pub fn shipped_examples() -> Vec<ProblemSpec> {
    vec![
        example_two_solutions(),
        example_three_solutions(),
        example_four_solutions(),
    ]
}
