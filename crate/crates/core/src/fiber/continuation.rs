//! Newton continuation on a homotopy `G(u) = R(u) - t·R(u₀)`, `t: 1 → 0`.
//!
//! `u₀` solves the `t = 1` problem trivially; each continuation step solves the
//! next problem by undamped Newton from the previous solution. A failed step is
//! retried with half the step; the step re-doubles (up to its initial size)
//! after two consecutive successes.

use crate::error::{FiberError, Result};
use crate::Vector;

/// A square nonlinear system together with its Newton correction.
pub trait HomotopySystem {
    fn residual(&self, u: &Vector) -> Result<Vector>;
    fn norm(&self, r: &Vector) -> Result<f64>;
    /// `δ` with `J(u) δ = -r`.
    fn correction(&self, u: &Vector, r: &Vector) -> Result<Vector>;
    /// Quantities recorded at every iterate (fiber heights, for instance).
    fn monitor(&self, _u: &Vector) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// Number of uniform steps in `t` before any adaptation.
    pub steps: usize,
    pub min_step: f64,
    pub max_newton: usize,
    pub tolerance: f64,
    /// A Newton run is abandoned once its residual exceeds this multiple of the
    /// residual it started from.
    pub divergence_factor: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            steps: 10,
            min_step: 2f64.powi(-20),
            max_newton: 25,
            tolerance: 1e-10,
            divergence_factor: 1e8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonRecord {
    pub t: f64,
    pub iteration: usize,
    pub residual: f64,
    pub monitor: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ContinuationLog {
    pub records: Vec<NewtonRecord>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    /// Residual history of the last accepted Newton run.
    pub final_residuals: Vec<f64>,
}

enum StepOutcome {
    Converged(Vector, Vec<f64>),
    Failed,
}

fn newton_run<S: HomotopySystem + ?Sized>(
    system: &S,
    start: &Vector,
    shift: Option<(&Vector, f64)>,
    options: &ContinuationOptions,
    log: &mut ContinuationLog,
) -> Result<StepOutcome> {
    let t = shift.map_or(0.0, |(_, t)| t);
    let mut u = start.clone();
    let mut history = Vec::new();
    let mut initial = None;
    for iteration in 0..=options.max_newton {
        let r = match system.residual(&u) {
            Ok(r) => r,
            Err(FiberError::InvalidParameter(_)) => return Ok(StepOutcome::Failed),
            Err(e) => return Err(e),
        };
        let r = match shift {
            Some((r0, t)) if t != 0.0 => r - r0 * t,
            _ => r,
        };
        let norm = system.norm(&r)?;
        log.records.push(NewtonRecord {
            t,
            iteration,
            residual: norm,
            monitor: system.monitor(&u),
        });
        history.push(norm);
        if !norm.is_finite() || u.iter().any(|x| !x.is_finite()) {
            return Ok(StepOutcome::Failed);
        }
        if norm <= options.tolerance {
            return Ok(StepOutcome::Converged(u, history));
        }
        let first = *initial.get_or_insert(norm);
        if norm > options.divergence_factor * first.max(options.tolerance)
            || iteration == options.max_newton
        {
            return Ok(StepOutcome::Failed);
        }
        let delta = system.correction(&u, &r)?;
        log.newton_iterations += 1;
        u += delta;
    }
    Ok(StepOutcome::Failed)
}

/// Plain undamped Newton on `R(u) = 0` from `u0`, without continuation.
pub fn plain_newton<S: HomotopySystem + ?Sized>(
    system: &S,
    u0: &Vector,
    options: &ContinuationOptions,
) -> Result<(Vector, ContinuationLog)> {
    let mut log = ContinuationLog::default();
    match newton_run(system, u0, None, options, &mut log)? {
        StepOutcome::Converged(u, history) => {
            log.accepted_steps = 1;
            log.final_residuals = history;
            Ok((u, log))
        }
        StepOutcome::Failed => {
            let residual = log.records.last().map_or(f64::NAN, |r| r.residual);
            Err(FiberError::ContinuationStalled {
                t: 0.0,
                step: 1.0,
                residual,
            })
        }
    }
}

/// Solves `R(u) = 0` by continuation from `u0`.
pub fn continuation_solve<S: HomotopySystem + ?Sized>(
    system: &S,
    u0: &Vector,
    options: &ContinuationOptions,
) -> Result<(Vector, ContinuationLog)> {
    let mut log = ContinuationLog::default();
    let r0 = system.residual(u0)?;
    let n0 = system.norm(&r0)?;
    log.records.push(NewtonRecord {
        t: 1.0,
        iteration: 0,
        residual: n0,
        monitor: system.monitor(u0),
    });
    if n0 <= options.tolerance {
        log.final_residuals = vec![n0];
        return Ok((u0.clone(), log));
    }

    let max_step = 1.0 / options.steps.max(1) as f64;
    let mut step = max_step;
    let mut t = 1.0;
    let mut u = u0.clone();
    let mut streak = 0;
    while t > 0.0 {
        let mut next = t - step;
        if next < 1e-12 {
            next = 0.0;
        }
        match newton_run(system, &u, Some((&r0, next)), options, &mut log)? {
            StepOutcome::Converged(v, history) => {
                u = v;
                t = next;
                log.accepted_steps += 1;
                log.final_residuals = history;
                streak += 1;
                if streak >= 2 {
                    step = (2.0 * step).min(max_step);
                    streak = 0;
                }
            }
            StepOutcome::Failed => {
                log.rejected_steps += 1;
                streak = 0;
                step *= 0.5;
                if step < options.min_step {
                    let residual = log.records.last().map_or(f64::NAN, |r| r.residual);
                    return Err(FiberError::ContinuationStalled { t, step, residual });
                }
            }
        }
    }
    Ok((u, log))
}
