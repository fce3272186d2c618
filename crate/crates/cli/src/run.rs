use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fiberfem::decomposition::index_set;
use fiberfem::fem::FemSystem;
use fiberfem::fiber::{trace_fiber, Problem, Trace};
use fiberfem::inversion::{
    curve_self_intersections, double_point_solutions, image_path_2d, refine_preimage, solve_1d,
    PathKind, PathSpec, PlanarCurve, SelfIntersection, Solution,
};
use fiberfem::io;
use fiberfem::linalg::{smallest_eigenpairs, EigenBasis, EigenOptions};
use fiberfem::mesh::uniform_rectangle_mesh;
use fiberfem::problems::{MeshSpec, ProblemSpec, Tolerances};
use fiberfem::{FiberError, Result, SpdFactorization};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{exit_code, Command, ConfigArg};

const EIGEN_RESIDUAL_LIMIT: f64 = 1e-8;

#[derive(Debug, Serialize)]
struct Failure {
    kind: String,
    detail: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: String,
    config_hash: String,
    threads: usize,
    mesh: MeshSpec,
    eigenvalues: Vec<f64>,
    /// One-based eigen indices.
    index_set: Vec<usize>,
    tolerances: Tolerances,
    timings: BTreeMap<String, f64>,
    outputs: Vec<String>,
    failures: Vec<Failure>,
}

struct Run {
    out: PathBuf,
    spec: ProblemSpec,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, config: &ConfigArg, out: &Path, threads: usize) -> Result<Self> {
        let bytes = std::fs::read(&config.config).map_err(|e| FiberError::io(&config.config, e))?;
        let text =
            String::from_utf8(bytes.clone()).map_err(|e| FiberError::Config(e.to_string()))?;
        let spec = ProblemSpec::from_json(&text)?;
        std::fs::create_dir_all(out).map_err(|e| FiberError::io(out, e))?;
        let manifest = RunManifest {
            command: command.to_string(),
            config: config.config.display().to_string(),
            config_hash: hex::encode(Sha256::digest(&bytes)),
            threads,
            mesh: spec.mesh,
            eigenvalues: Vec::new(),
            index_set: Vec::new(),
            tolerances: spec.tol,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
        };
        Ok(Self {
            out: out.to_path_buf(),
            spec,
            manifest,
        })
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f(self);
        self.manifest
            .timings
            .insert(phase.to_string(), t.elapsed().as_secs_f64());
        r
    }

    fn build(&mut self) -> Result<Problem> {
        let spec = self.spec.clone();
        let p = self.timed("build", |_| Problem::build(&spec))?;
        self.manifest.eigenvalues = p.basis.eigenvalues.clone();
        self.manifest.index_set = p.decomposition.index_set.iter().map(|j| j + 1).collect();
        Ok(p)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        io::write_text(self.out.join(name), text)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }

    fn fail(&mut self, kind: &str, detail: String) {
        log::warn!("{kind}: {detail}");
        self.manifest.failures.push(Failure {
            kind: kind.to_string(),
            detail,
        });
    }

    /// Writes the manifest and turns the outcome into an exit status.
    fn finish(mut self, outcome: Result<()>) -> Result<u8> {
        let code = match &outcome {
            Ok(()) if self.manifest.failures.is_empty() => 0,
            Ok(()) => 3,
            Err(e) => {
                let code = exit_code(e);
                self.fail("error", e.to_string());
                code
            }
        };
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        io::write_text(self.out.join("manifest.json"), &text)?;
        if let Err(e) = outcome {
            eprintln!("error: {e}");
        }
        Ok(code)
    }
}

pub fn execute(command: Command, threads: usize) -> Result<u8> {
    match command {
        Command::Mesh {
            nx,
            ny,
            width,
            height,
            out,
        } => {
            let mesh = uniform_rectangle_mesh(width, height, nx, ny)?;
            mesh.write(&out)?;
            Ok(0)
        }
        Command::Eigen { config, k, out } => {
            let mut run = Run::start("eigen", &config, &out, threads)?;
            let outcome = eigen(&mut run, k);
            run.finish(outcome)
        }
        Command::Trace {
            config,
            tmin,
            tmax,
            steps,
            direction,
            out,
        } => {
            let mut run = Run::start("trace", &config, &out, threads)?;
            let outcome =
                trace_command(&mut run, tmin, tmax, steps, direction.as_deref()).map(|_| ());
            run.finish(outcome)
        }
        Command::Solve { config, out } => {
            let mut run = Run::start("solve", &config, &out, threads)?;
            let outcome = solve(&mut run);
            run.finish(outcome)
        }
        Command::Path2d {
            config,
            path,
            resolution,
            out,
        } => {
            let mut run = Run::start("path2d", &config, &out, threads)?;
            let outcome = match path {
                Some(p) => single_path(&mut run, &p, resolution),
                None => double_point(&mut run),
            };
            run.finish(outcome)
        }
        Command::Preimage {
            config,
            target,
            start,
            out,
        } => {
            let mut run = Run::start("preimage", &config, &out, threads)?;
            let outcome = preimage(&mut run, &target, &start);
            run.finish(outcome)
        }
        Command::Residual {
            config,
            solution,
            check,
        } => residual(&config, &solution, check),
    }
}

#[derive(Serialize)]
struct EigenFile<'a> {
    eigenvalues: &'a [f64],
    eigenvectors_file: &'a str,
    residuals: &'a [f64],
    sweeps: usize,
}

fn eigen(run: &mut Run, k: Option<usize>) -> Result<()> {
    let m = run.spec.mesh;
    let k = k.unwrap_or(run.spec.k);
    let basis: EigenBasis = run.timed("eigen", |_| {
        let fem = FemSystem::new(uniform_rectangle_mesh(m.width, m.height, m.nx, m.ny)?)?;
        if k == 0 || k > fem.dim() {
            return Err(FiberError::Config(format!(
                "k = {k} must lie in 1..={}",
                fem.dim()
            )));
        }
        let spd = SpdFactorization::new(&fem.stiffness)?;
        smallest_eigenpairs(&spd, &fem.mass, k, &EigenOptions::default())
    })?;
    run.manifest.eigenvalues = basis.eigenvalues.clone();
    run.manifest.index_set = index_set(&basis.eigenvalues, run.spec.interval)
        .into_iter()
        .map(|j| j + 1)
        .collect();
    run.write("eigenvectors.csv", &io::eigenvectors_csv(&basis))?;
    run.write_json(
        "eigen.json",
        &EigenFile {
            eigenvalues: &basis.eigenvalues,
            eigenvectors_file: "eigenvectors.csv",
            residuals: &basis.residuals,
            sweeps: basis.sweeps,
        },
    )?;
    for (j, r) in basis.residuals.iter().enumerate() {
        if r.is_nan() || *r > EIGEN_RESIDUAL_LIMIT {
            run.fail(
                "eigen_residual",
                format!("eigenpair {} residual {r:e}", j + 1),
            );
        }
    }
    Ok(())
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| FiberError::Config(format!("bad {what} component {s:?}")))
        })
        .collect()
}

fn parse_pair(text: &str, what: &str) -> Result<[f64; 2]> {
    match parse_list(text, what)?.as_slice() {
        [a, b] => Ok([*a, *b]),
        v => Err(FiberError::Config(format!(
            "{what} needs 2 components, got {}",
            v.len()
        ))),
    }
}

fn check_trace(run: &mut Run, problem: &Problem, trace: &Trace) {
    for s in &trace.samples {
        if s.point.residual_h > problem.tol.fiber {
            run.fail(
                "fiber_tolerance",
                format!("residual_h {:e} at t = {}", s.point.residual_h, s.t),
            );
        }
    }
    if let Some((t, e)) = &trace.failure {
        run.fail(
            "trace_incomplete",
            format!("corrector failed at t = {t}: {e}"),
        );
    }
}

fn trace_command(
    run: &mut Run,
    tmin: Option<f64>,
    tmax: Option<f64>,
    steps: Option<usize>,
    direction: Option<&str>,
) -> Result<(Problem, Trace)> {
    let problem = run.build()?;
    let configured = run.spec.trace.clone();
    let tmin = tmin.or(configured.as_ref().map(|t| t.tmin));
    let tmax = tmax.or(configured.as_ref().map(|t| t.tmax));
    let steps = steps.or(configured.as_ref().map(|t| t.steps));
    let (Some(tmin), Some(tmax), Some(steps)) = (tmin, tmax, steps) else {
        return Err(FiberError::Config(
            "trace window needs tmin, tmax and steps".into(),
        ));
    };
    if tmin > tmax {
        return Err(FiberError::Config(format!(
            "tmin {tmin} exceeds tmax {tmax}"
        )));
    }
    let direction = match direction {
        Some(d) => parse_list(d, "direction")?,
        None => configured.and_then(|t| t.direction).unwrap_or_else(|| {
            let mut e = vec![0.0; problem.vertical_dim()];
            e[0] = 1.0;
            e
        }),
    };
    let trace = run.timed("trace", |_| {
        trace_fiber(&problem, [tmin, tmax], steps, &direction, &problem.start)
    })?;
    run.write("trace.csv", &io::trace_csv(&trace))?;
    check_trace(run, &problem, &trace);
    Ok((problem, trace))
}

#[derive(Serialize)]
struct SolutionRecord<'a> {
    label: String,
    height: &'a [f64],
    f_heights: &'a [f64],
    target: &'a [f64],
    residual: f64,
    newton_steps: usize,
    values_file: String,
}

fn write_solutions(
    run: &mut Run,
    problem: &Problem,
    solutions: &[(String, Solution)],
) -> Result<()> {
    let mut records = Vec::new();
    for (i, (label, s)) in solutions.iter().enumerate() {
        let file = format!("solution_{}.csv", i + 1);
        run.write(&file, &io::vector_csv(&s.u))?;
        if s.residual.is_nan() || s.residual > problem.tol.solution {
            run.fail(
                "solution_tolerance",
                format!(
                    "solution {label} residual {:e} exceeds {:e}",
                    s.residual, problem.tol.solution
                ),
            );
        }
        records.push(SolutionRecord {
            label: label.clone(),
            height: &s.height,
            f_heights: &s.f_heights,
            target: &s.target,
            residual: s.residual,
            newton_steps: s.newton_path.len(),
            values_file: file,
        });
    }
    run.write_json("solutions.json", &records)
}

fn solve(run: &mut Run) -> Result<()> {
    if run.spec.trace.is_none() {
        return Err(FiberError::Config(
            "solve needs a trace block in the config".into(),
        ));
    }
    let (problem, trace) = trace_command(run, None, None, None, None)?;
    if problem.vertical_dim() != 1 {
        return Err(FiberError::Config(format!(
            "solve needs |J| = 1, got {}",
            problem.vertical_dim()
        )));
    }
    let target = problem.decomposition.heights_y(&problem.rhs)[0];
    let found = run.timed("solve_1d", |_| solve_1d(&problem, &trace, target))?;
    for g in &found.grazing {
        run.fail(
            "grazing",
            format!(
                "height curve touches the target within {:e} at t = {}",
                g.offset, g.t
            ),
        );
    }
    let labelled: Vec<(String, Solution)> = found
        .solutions
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("S{}", i + 1), s))
        .collect();
    log::info!("{} solutions", labelled.len());
    write_solutions(run, &problem, &labelled)
}

fn parse_path(text: &str, resolution: Option<usize>, default_length: f64) -> Result<PathSpec> {
    let bad = || FiberError::Config(format!("cannot parse path {text:?}"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let mut params = BTreeMap::new();
    for item in rest.split(',') {
        let (k, v) = item.split_once('=').ok_or_else(bad)?;
        params.insert(
            k.trim().to_string(),
            v.trim().parse::<f64>().map_err(|_| bad())?,
        );
    }
    let path = match kind.trim() {
        "circle" => PathSpec::circle(*params.get("r").ok_or_else(bad)?, resolution.unwrap_or(128)),
        "ray" => PathSpec::ray(
            *params.get("angle").ok_or_else(bad)?,
            params.get("length").copied().unwrap_or(default_length),
            resolution.unwrap_or(64),
        ),
        _ => return Err(bad()),
    };
    path.validate()
        .map_err(|e| FiberError::Config(e.to_string()))?;
    Ok(path)
}

fn check_curve(run: &mut Run, problem: &Problem, name: &str, curve: &PlanarCurve) {
    for (i, r) in curve.residual_h.iter().enumerate() {
        if *r > problem.tol.fiber {
            run.fail(
                "fiber_tolerance",
                format!("{name} sample {i} residual_h {r:e}"),
            );
        }
    }
    if let Some((i, e)) = &curve.failure {
        run.fail(
            "path_incomplete",
            format!("{name} stopped at sample {i}: {e}"),
        );
    }
}

fn single_path(run: &mut Run, text: &str, resolution: Option<usize>) -> Result<()> {
    let default_length = run.spec.path2d.as_ref().map_or(1.0, |p| p.axis_length);
    let path = parse_path(text, resolution, default_length)?;
    let problem = run.build()?;
    let curve = run.timed("path", |_| image_path_2d(&problem, &path, &problem.start))?;
    run.write("curve.csv", &io::curve_csv(&curve))?;
    check_curve(run, &problem, "curve", &curve);
    if matches!(path.kind, PathKind::Circle { .. }) {
        let x: Vec<SelfIntersection> = curve_self_intersections(&curve);
        log::info!("{} self-intersections", x.len());
        run.write_json("intersections.json", &x)?;
    }
    Ok(())
}

fn double_point(run: &mut Run) -> Result<()> {
    let Some(spec) = run.spec.path2d.clone() else {
        return Err(FiberError::Config(
            "give --path or a path2d block in the config".into(),
        ));
    };
    let problem = run.build()?;
    let report = run.timed("double_point", |_| {
        double_point_solutions(&problem, &spec, &problem.start)
    })?;
    run.write("circle.csv", &io::curve_csv(&report.circle))?;
    check_curve(run, &problem, "circle", &report.circle);
    for (name, axis) in ["axis_0.csv", "axis_pi.csv"].into_iter().zip(&report.axes) {
        run.write(name, &io::curve_csv(axis))?;
        check_curve(run, &problem, name, axis);
    }
    run.write_json("intersections.json", &report.intersections)?;
    if report.intersections.is_empty() {
        run.fail(
            "no_double_point",
            "circle image has no self-intersection".into(),
        );
    }
    write_solutions(run, &problem, &report.solutions)
}

fn preimage(run: &mut Run, target: &str, start: &str) -> Result<()> {
    let z = parse_pair(target, "target")?;
    let v = parse_pair(start, "start")?;
    let problem = run.build()?;
    let s = run.timed("preimage", |_| {
        refine_preimage(&problem, v, z, &problem.start)
    })?;
    write_solutions(run, &problem, &[("P".to_string(), s)])
}

#[derive(Serialize)]
struct ResidualReport {
    residual: f64,
    tolerance: f64,
    within_tolerance: bool,
}

fn residual(config: &ConfigArg, solution: &Path, check: bool) -> Result<u8> {
    let spec = ProblemSpec::read(&config.config)?;
    let u = io::read_vector_csv(solution)?;
    let problem = Problem::build(&spec)?;
    if u.len() != problem.dim() {
        return Err(FiberError::DimensionMismatch {
            expected: problem.dim(),
            got: u.len(),
        });
    }
    let r = problem
        .decomposition
        .y_norm(&(problem.evaluate_f(&u)? - &problem.rhs))?;
    let report = ResidualReport {
        residual: r,
        tolerance: problem.tol.solution,
        within_tolerance: r <= problem.tol.solution,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(if check && !report.within_tolerance {
        3
    } else {
        0
    })
}
